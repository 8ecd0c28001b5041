#pragma once

#include <stdexcept>
#include <string>

namespace m2tr {

/// Tensor shapes that do not line up for an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid hyperparameters or block construction arguments.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed files, manifests, or inputs that violate a data contract.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or undefined numeric quantities.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Misuse of the gradient machinery (e.g. backward from a non-scalar).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace m2tr
