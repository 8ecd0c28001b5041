#pragma once

// Training objective: binary cross-entropy on the detection score, per-pixel
// binary cross-entropy on the predicted mask, and a cosine-distance
// contrastive term pulling real-sample features toward their batch centre.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "m2tr/errors.hpp"
#include "m2tr/graph.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/tensor.hpp"

namespace m2tr {

inline constexpr double kProbEps = 1e-7;

struct LossWeights {
    double seg = 1.0;
    double con = 0.001;
};

namespace loss_detail {

inline void check_label(double y) {
    if (y != 0.0 && y != 1.0) throw DataError("label must be 0 or 1, got " + std::to_string(y));
}

}  // namespace loss_detail

/// -[y log p + (1 - y) log(1 - p)] with p clamped to [eps, 1 - eps].
inline double cls_loss(double p, int y) {
    loss_detail::check_label(y);
    const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
    return -(y * std::log(pc) + (1 - y) * std::log(1.0 - pc));
}

/// Mean per-pixel binary cross-entropy between a predicted mask and a {0,1} mask.
template <typename T>
double seg_loss(const Tensor<T>& pred, const Tensor<T>& truth) {
    if (pred.size() != truth.size()) throw ShapeError("seg_loss: mask sizes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        loss_detail::check_label(truth[i]);
        const double pc = std::clamp(static_cast<double>(pred[i]), kProbEps, 1.0 - kProbEps);
        acc -= truth[i] * std::log(pc) + (1 - truth[i]) * std::log(1.0 - pc);
    }
    return acc / static_cast<double>(pred.size());
}

inline double total_loss(double cls, double seg, double con, const LossWeights& w) {
    return cls + w.seg * seg + w.con * con;
}

/// Differentiable mean binary cross-entropy of probabilities against {0,1}
/// targets of the same element count. Clamped entries pass no gradient.
template <typename T>
Var<T> bce_mean(Var<T> prob, const Tensor<T>& target) {
    const Tensor<T>& p = prob.value();
    if (p.size() != target.size()) throw ShapeError("bce: prediction and target sizes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        loss_detail::check_label(target[i]);
        const double pc = std::clamp(static_cast<double>(p[i]), kProbEps, 1.0 - kProbEps);
        acc -= target[i] * std::log(pc) + (1 - target[i]) * std::log(1.0 - pc);
    }
    const auto n = static_cast<double>(p.size());
    return prob.graph->record(Tensor<T>({1}, static_cast<T>(acc / n)),
                              [ip = prob.id, target, n](Graph<T>& g, const Tensor<T>& dy) {
                                  const Tensor<T>& p = g.value(ip);
                                  Tensor<T> dp(p.shape());
                                  for (std::size_t i = 0; i < p.size(); ++i) {
                                      const double pv = p[i];
                                      if (pv < kProbEps || pv > 1.0 - kProbEps) continue;
                                      const double d = -(target[i] / pv - (1 - target[i]) / (1.0 - pv));
                                      dp[i] = static_cast<T>(dy[0] * d / n);
                                  }
                                  g.accumulate(ip, std::move(dp));
                              });
}

/// Mean binary cross-entropy computed from logits. Equals bce_mean on the
/// sigmoid of the logits while the probabilities stay inside the clamp range;
/// the gradient (sigmoid(z) - y) / n never vanishes on saturation.
template <typename T>
Var<T> bce_logits_mean(Var<T> logit, const Tensor<T>& target) {
    const Tensor<T>& z = logit.value();
    if (z.size() != target.size()) throw ShapeError("bce: logit and target sizes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        loss_detail::check_label(target[i]);
        const double zi = z[i];
        acc += std::max(zi, 0.0) - zi * target[i] + std::log1p(std::exp(-std::abs(zi)));
    }
    const auto n = static_cast<double>(z.size());
    return logit.graph->record(Tensor<T>({1}, static_cast<T>(acc / n)),
                               [iz = logit.id, target, n](Graph<T>& g, const Tensor<T>& dy) {
                                   const Tensor<T>& z = g.value(iz);
                                   Tensor<T> dz(z.shape());
                                   for (std::size_t i = 0; i < z.size(); ++i) {
                                       const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
                                       dz[i] = static_cast<T>(dy[0] * (p - target[i]) / n);
                                   }
                                   g.accumulate(iz, std::move(dz));
                               });
}

template <typename T>
Var<T> cls_loss(Var<T> prob, int y) {
    loss_detail::check_label(y);
    return bce_mean(prob, Tensor<T>(prob.shape(), static_cast<T>(y)));
}

template <typename T>
Var<T> seg_loss(Var<T> mask_prob, const Tensor<T>& truth) {
    return bce_mean(mask_prob, truth);
}

/// Result of the contrastive term; `skipped` when the batch holds no real sample.
template <typename T>
struct ContrastiveResult {
    double value = 0.0;
    bool skipped = false;
    Tensor<T> grad;  // d value / d features, (n, D)
};

/// mean_real d(f, c) - mean_fake d(f, c) with d = 1 - cos and c the mean of
/// the real features in the batch (gradient flows through c).
template <typename T>
ContrastiveResult<T> contrastive_loss(const Tensor<T>& features, const std::vector<int>& labels) {
    require_rank(features, 2, "contrastive_loss");
    const std::size_t n = features.dim(0), d = features.dim(1);
    if (labels.size() != n) throw ShapeError("contrastive_loss: feature/label count mismatch");
    ContrastiveResult<T> r;
    r.grad = Tensor<T>(features.shape());
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) {
        loss_detail::check_label(y);
        (y == 0 ? n_pos : n_neg)++;
    }
    if (n_pos == 0) {
        r.skipped = true;
        return r;
    }

    std::vector<double> center(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == 0)
            for (std::size_t j = 0; j < d; ++j) center[j] += features.at(i, j);
    for (auto& v : center) v /= static_cast<double>(n_pos);
    double cnorm = 0.0;
    for (double v : center) cnorm += v * v;
    cnorm = std::sqrt(cnorm);
    if (!(cnorm > 0.0)) throw NumericError("contrastive_loss: real-sample centre has zero norm");

    std::vector<double> dcenter(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const T* f = features.data() + i * d;
        double fn = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            fn += double(f[j]) * f[j];
            dot += double(f[j]) * center[j];
        }
        fn = std::sqrt(fn);
        if (!(fn > 0.0)) throw NumericError("contrastive_loss: zero-norm feature vector");
        const double cosv = dot / (fn * cnorm);
        const double w = labels[i] == 0 ? 1.0 / n_pos : -1.0 / n_neg;
        r.value += w * (1.0 - cosv);
        // d cos / d f = c / (|f||c|) - cos f / |f|^2 ; d cos / d c symmetric
        for (std::size_t j = 0; j < d; ++j) {
            r.grad.at(i, j) += static_cast<T>(-w * (center[j] / (fn * cnorm) - cosv * f[j] / (fn * fn)));
            dcenter[j] += -w * (f[j] / (fn * cnorm) - cosv * center[j] / (cnorm * cnorm));
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == 0)
            for (std::size_t j = 0; j < d; ++j) r.grad.at(i, j) += static_cast<T>(dcenter[j] / n_pos);
    return r;
}

/// Graph form of the contrastive term on stacked features (n, D).
template <typename T>
Var<T> contrastive_loss(Var<T> features, const std::vector<int>& labels) {
    auto r = contrastive_loss(features.value(), labels);
    return features.graph->record(Tensor<T>({1}, static_cast<T>(r.value)),
                                  [iff = features.id, grad = std::move(r.grad)](Graph<T>& g, const Tensor<T>& dy) {
                                      Tensor<T> df = grad;
                                      for (auto& v : df.values()) v *= dy[0];
                                      g.accumulate(iff, std::move(df));
                                  });
}

}  // namespace m2tr
