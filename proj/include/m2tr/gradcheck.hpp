#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "m2tr/graph.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/params.hpp"
#include "m2tr/rng.hpp"

namespace m2tr {

struct GradcheckOptions {
    double eps = 1e-4;
    /// Entries probed per tensor; larger tensors are sampled at random positions.
    std::size_t max_entries = 24;
    bool check_inputs = true;
    /// Gradient magnitude below which errors are measured against this floor
    /// instead (tensors with identically zero gradient, e.g. key biases).
    double scale_floor = 1e-6;
};

struct GradcheckEntry {
    std::string tensor;
    double rel_error = 0.0;
    std::size_t probed = 0;
};

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::vector<GradcheckEntry> tensors;
};

/// Builds the graph under test from bound inputs; may return a tensor of any shape.
using GradcheckBuild =
    std::function<Var<double>(Graph<double>&, const ParameterStore<double>&, const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients of sum(out ⊙ R), R a fixed random projection,
/// with central differences. The error per tensor is norm-wise:
/// max|analytic - numeric| / max(max|analytic|, max|numeric|, floor) over probed entries.
inline GradcheckResult gradcheck(ParameterStore<double>& ps, std::vector<Tensor<double>> inputs,
                                 const GradcheckBuild& build, std::uint64_t seed,
                                 const GradcheckOptions& opt = {}) {
    Rng rng(seed);
    Tensor<double> projection;

    auto evaluate = [&](Graph<double>& g, std::vector<Var<double>>& bound) {
        bound.clear();
        for (const auto& t : inputs) bound.push_back(g.input(t));
        Var<double> out = build(g, ps, bound);
        if (projection.empty()) {
            projection = Tensor<double>(out.shape());
            for (auto& v : projection.values()) v = rng.uniform(-1.0, 1.0);
        }
        return ops::weighted_sum(out, projection);
    };

    Graph<double> g;
    std::vector<Var<double>> bound;
    Var<double> loss = evaluate(g, bound);
    g.backward(loss);

    auto loss_at = [&]() {
        Graph<double> probe(false);
        std::vector<Var<double>> b;
        return evaluate(probe, b).value()[0];
    };

    GradcheckResult result;
    auto check_tensor = [&](const std::string& label, Tensor<double>& target, const Tensor<double>& analytic) {
        std::vector<std::size_t> idx(target.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (idx.size() > opt.max_entries) {
            rng.shuffle(idx.begin(), idx.end());
            idx.resize(opt.max_entries);
        }
        double max_diff = 0.0, scale = analytic.max_abs();
        for (std::size_t i : idx) {
            const double saved = target[i];
            target[i] = saved + opt.eps;
            const double up = loss_at();
            target[i] = saved - opt.eps;
            const double down = loss_at();
            target[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.eps);
            max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
            scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
        }
        GradcheckEntry e{label, max_diff / std::max(scale, opt.scale_floor), idx.size()};
        if (e.rel_error >= result.max_rel_error) {
            result.max_rel_error = e.rel_error;
            result.worst = label;
        }
        result.tensors.push_back(e);
    };

    const auto& pg = g.param_grads();
    for (std::size_t id = 0; id < ps.size(); ++id) {
        auto it = pg.find(id);
        const Tensor<double> analytic = it != pg.end() ? it->second : Tensor<double>(ps.value(id).shape());
        check_tensor(ps.name(id), ps.value(id), analytic);
    }
    if (opt.check_inputs) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            auto gr = g.grad(bound[k]);
            const Tensor<double> analytic = gr ? *gr : Tensor<double>(inputs[k].shape());
            check_tensor("input" + std::to_string(k), inputs[k], analytic);
        }
    }
    return result;
}

}  // namespace m2tr
