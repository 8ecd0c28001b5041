#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "m2tr/errors.hpp"
#include "m2tr/graph.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/rng.hpp"
#include "m2tr/tensor.hpp"

namespace m2tr {

/// Named learnable tensors with gradient slots. Ids are registration order.
template <typename T>
class ParameterStore {
public:
    std::size_t add(std::string name, Tensor<T> init) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_.emplace(name, names_.size());
        names_.push_back(std::move(name));
        grads_.emplace_back(init.shape());
        values_.push_back(std::move(init));
        return names_.size() - 1;
    }

    /// Uniform(-bound, bound) initialization.
    std::size_t add_uniform(std::string name, Shape shape, double bound, Rng& rng) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        return add(std::move(name), std::move(t));
    }

    std::size_t size() const noexcept { return names_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

    const std::string& name(std::size_t id) const { return names_.at(id); }
    const Tensor<T>& value(std::size_t id) const { return values_.at(id); }
    Tensor<T>& value(std::size_t id) { return values_.at(id); }
    const Tensor<T>& grad(std::size_t id) const { return grads_.at(id); }
    Tensor<T>& grad(std::size_t id) { return grads_.at(id); }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    Var<T> bind(Graph<T>& g, std::size_t id) const { return g.param(id, values_.at(id)); }

    void zero_grad() {
        for (auto& gr : grads_) gr.fill(T{0});
    }

    /// Adds per-graph parameter gradients into the store's slots.
    void accumulate_grads(const std::map<std::size_t, Tensor<T>>& grads, T factor = T{1}) {
        for (const auto& [id, gr] : grads) {
            Tensor<T>& dst = grads_.at(id);
            for (std::size_t i = 0; i < gr.size(); ++i) dst[i] += factor * gr[i];
        }
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
        return out;
    }

    /// Copies values from another store with identical names and shapes.
    template <typename U>
    void assign_from(const ParameterStore<U>& other) {
        if (other.size() != size()) throw ShapeError("parameter store size mismatch");
        for (std::size_t i = 0; i < size(); ++i) {
            if (other.name(i) != names_[i]) throw ShapeError("parameter name mismatch: " + names_[i]);
            values_[i] = other.value(i).template cast<T>();
        }
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> values_;
    std::vector<Tensor<T>> grads_;
    std::map<std::string, std::size_t> index_;
};

/// A convolution's parameters: weights (k, k, Cin, Cout) and bias (Cout).
struct ConvParams {
    std::size_t weight = 0, bias = 0;
    std::size_t k = 1, cin = 0, cout = 0, stride = 1, pad = 0;
};

/// A dense layer's parameters: weights (in, out) and bias (out).
struct DenseParams {
    std::size_t weight = 0, bias = 0;
    std::size_t in = 0, out = 0;
};

/// Fan-in scaled uniform init; gain 2 for layers feeding a ReLU.
template <typename T>
ConvParams make_conv(ParameterStore<T>& ps, const std::string& name, std::size_t k, std::size_t cin,
                     std::size_t cout, std::size_t stride, std::size_t pad, Rng& rng, double gain = 1.0) {
    ConvParams c{0, 0, k, cin, cout, stride, pad};
    const double bound = std::sqrt(3.0 * gain / static_cast<double>(k * k * cin));
    c.weight = ps.add_uniform(name + ".weight", {k, k, cin, cout}, bound, rng);
    c.bias = ps.add(name + ".bias", Tensor<T>({cout}));
    return c;
}

template <typename T>
DenseParams make_dense(ParameterStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       double gain = 1.0) {
    DenseParams d{0, 0, in, out};
    const double bound = std::sqrt(3.0 * gain / static_cast<double>(in));
    d.weight = ps.add_uniform(name + ".weight", {in, out}, bound, rng);
    d.bias = ps.add(name + ".bias", Tensor<T>({out}));
    return d;
}

template <typename T>
Var<T> apply(Graph<T>& g, const ParameterStore<T>& ps, const ConvParams& c, Var<T> x) {
    return ops::conv2d(x, ps.bind(g, c.weight), ps.bind(g, c.bias), c.stride, c.pad);
}

template <typename T>
Var<T> apply(Graph<T>& g, const ParameterStore<T>& ps, const DenseParams& d, Var<T> x) {
    return ops::dense(x, ps.bind(g, d.weight), ps.bind(g, d.bias));
}

}  // namespace m2tr
