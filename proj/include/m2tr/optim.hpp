#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "m2tr/errors.hpp"
#include "m2tr/params.hpp"

namespace m2tr {

/// Adam with bias-corrected moments, applied to a parameter store's gradients.
template <typename T>
class Adam {
public:
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit Adam(const ParameterStore<T>& ps) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
            m_.emplace_back(ps.value(i).shape());
            v_.emplace_back(ps.value(i).shape());
        }
    }

    void step(ParameterStore<T>& ps, double lr) {
        if (ps.size() != m_.size()) throw ContractError("Adam: parameter store changed size");
        ++t_;
        const double c1 = 1.0 - std::pow(beta1, double(t_)), c2 = 1.0 - std::pow(beta2, double(t_));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            Tensor<T>& w = ps.value(i);
            const Tensor<T>& g = ps.grad(i);
            Tensor<T>& m = m_[i];
            Tensor<T>& v = v_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = g[k];
                m[k] = static_cast<T>(beta1 * m[k] + (1 - beta1) * gk);
                v[k] = static_cast<T>(beta2 * v[k] + (1 - beta2) * gk * gk);
                const double mh = m[k] / c1, vh = v[k] / c2;
                w[k] = static_cast<T>(w[k] - lr * mh / (std::sqrt(vh) + eps));
            }
        }
    }

    std::uint64_t steps() const noexcept { return t_; }
    void set_steps(std::uint64_t t) noexcept { t_ = t; }
    std::vector<Tensor<T>>& first_moments() noexcept { return m_; }
    std::vector<Tensor<T>>& second_moments() noexcept { return v_; }
    const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
    const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

private:
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace m2tr
