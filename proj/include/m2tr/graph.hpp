#pragma once

#include <cstddef>
#include <functional>
#include <deque>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "m2tr/errors.hpp"
#include "m2tr/tensor.hpp"

namespace m2tr {

template <typename T>
class Graph;

/// Handle to a value recorded on a Graph.
template <typename T>
struct Var {
    Graph<T>* graph = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const { return graph->value(*this); }
    const Shape& shape() const { return value().shape(); }
};

/// Tape of primitive operations (the gradient context). Confined to one thread.
///
/// Every primitive records its output value plus an adjoint closure; backward()
/// replays the closures once each in reverse recording order. Parameter leaves
/// are keyed by a caller-chosen id and their gradients collected per graph, so
/// independent graphs can run on different threads over shared parameters.
template <typename T>
class Graph {
public:
    using Backward = std::function<void(Graph&, const Tensor<T>& out_grad)>;

    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return record_; }

    Var<T> input(Tensor<T> value) { return push(std::move(value), nullptr, {}); }

    /// Leaf bound to an externally owned parameter tensor (not copied).
    Var<T> param(std::size_t param_id, const Tensor<T>& value) {
        Node n;
        n.ref = &value;
        n.param_id = param_id;
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    /// Records a primitive. `backward` receives the output adjoint and must call
    /// accumulate() for each input.
    Var<T> record(Tensor<T> value, Backward backward) {
        return push(std::move(value), record_ ? std::move(backward) : Backward{}, {});
    }

    const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).get(); }
    const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).get(); }

    /// Adds `g` into the adjoint of `v`.
    void accumulate(Var<T> v, const Tensor<T>& g) { accumulate(v.id, g); }

    void accumulate(std::size_t id, const Tensor<T>& g) {
        Node& n = nodes_.at(id);
        if (!n.grad) {
            if (g.shape() != n.get().shape())
                throw ContractError("adjoint shape " + shape_str(g.shape()) + " does not match value " +
                                    shape_str(n.get().shape()));
            n.grad = g;
            return;
        }
        if (g.shape() != n.grad->shape()) throw ContractError("adjoint shape mismatch");
        T* dst = n.grad->data();
        const T* src = g.data();
        for (std::size_t i = 0, e = g.size(); i < e; ++i) dst[i] += src[i];
    }

    void accumulate(std::size_t id, Tensor<T>&& g) {
        Node& n = nodes_.at(id);
        if (!n.grad) {
            if (g.shape() != n.get().shape())
                throw ContractError("adjoint shape " + shape_str(g.shape()) + " does not match value " +
                                    shape_str(n.get().shape()));
            n.grad = std::move(g);
            return;
        }
        accumulate(id, static_cast<const Tensor<T>&>(g));
    }

    /// Reverse sweep from a scalar loss.
    void backward(Var<T> loss) {
        if (value(loss).size() != 1)
            throw ContractError("backward requires a scalar loss, got shape " +
                                shape_str(value(loss).shape()));
        backward_seeded({{loss, Tensor<T>(value(loss).shape(), T{1})}});
    }

    /// Reverse sweep with explicit output adjoints (several outputs may be seeded).
    void backward_seeded(const std::vector<std::pair<Var<T>, Tensor<T>>>& seeds) {
        if (!record_) throw ContractError("backward on a graph recorded without gradients");
        if (swept_) throw ContractError("graph already swept");
        swept_ = true;
        for (const auto& [v, g] : seeds) accumulate(v, g);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.grad) continue;
            ++visited_;
            if (n.backward) {
                // Release the adjoint of intermediate nodes once propagated.
                Tensor<T> g = std::move(*n.grad);
                n.grad.reset();
                n.backward(*this, g);
                n.backward = nullptr;
            } else if (n.param_id) {
                auto [it, inserted] = param_grads_.try_emplace(*n.param_id, *n.grad);
                if (!inserted) {
                    for (std::size_t k = 0; k < it->second.size(); ++k) it->second[k] += (*n.grad)[k];
                }
            }
        }
    }

    /// Adjoint left on a leaf (input or parameter node) after backward.
    std::optional<Tensor<T>> grad(Var<T> v) const { return nodes_.at(v.id).grad; }

    /// Accumulated gradient per parameter id. Parameters never reached are absent.
    const std::map<std::size_t, Tensor<T>>& param_grads() const { return param_grads_; }

    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t visited() const noexcept { return visited_; }

private:
    struct Node {
        Tensor<T> owned;
        const Tensor<T>* ref = nullptr;
        Backward backward;
        std::optional<Tensor<T>> grad;
        std::optional<std::size_t> param_id;

        const Tensor<T>& get() const { return ref ? *ref : owned; }
    };

    Var<T> push(Tensor<T> value, Backward bw, std::optional<std::size_t> pid) {
        Node n;
        n.owned = std::move(value);
        n.backward = std::move(bw);
        n.param_id = pid;
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    bool record_;
    bool swept_ = false;
    std::size_t visited_ = 0;
    std::deque<Node> nodes_;
    std::map<std::size_t, Tensor<T>> param_grads_;
};

}  // namespace m2tr
