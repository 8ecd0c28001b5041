#pragma once

// Detector metrics (accuracy, rank AUC, mask IoU) and dataset-quality metrics
// (masked SSIM, perceptual distance on a fixed random conv pyramid, warping error).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "m2tr/data.hpp"
#include "m2tr/errors.hpp"
#include "m2tr/network.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/rng.hpp"
#include "m2tr/tensor.hpp"

namespace m2tr {

namespace metric_detail {

inline void check_scored(const std::vector<double>& scores, const std::vector<int>& labels, const char* what) {
    if (scores.empty()) throw DataError(std::string(what) + ": empty score set");
    if (scores.size() != labels.size())
        throw DataError(std::string(what) + ": " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
    for (int y : labels)
        if (y != 0 && y != 1) throw DataError(std::string(what) + ": labels must be 0 or 1");
}

}  // namespace metric_detail

/// Fraction of samples where (score >= threshold) agrees with the label.
inline double accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5) {
    metric_detail::check_scored(scores, labels, "accuracy");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) ok += (scores[i] >= threshold) == (labels[i] == 1);
    return static_cast<double>(ok) / static_cast<double>(scores.size());
}

/// Mann-Whitney AUC from mid-ranks: P(score_pos > score_neg) + 0.5 P(tie).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    metric_detail::check_scored(scores, labels, "auc");
    const std::size_t n = scores.size();
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc: needs at least one positive and one negative sample");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum += mid;
        i = j;
    }
    const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Intersection over union of (pred >= threshold) and (truth >= 0.5); 1 when both are empty.
template <typename T>
double mask_iou(const Tensor<T>& pred, const Tensor<T>& truth, double threshold = 0.5) {
    if (pred.size() != truth.size()) throw ShapeError("mask_iou: mask sizes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] >= threshold, t = truth[i] >= 0.5;
        inter += p && t;
        uni += p || t;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Running pooled IoU over many masks (total intersection / total union).
struct IouAccumulator {
    std::size_t inter = 0, uni = 0;

    template <typename T>
    void add(const Tensor<T>& pred, const Tensor<T>& truth, double threshold = 0.5) {
        if (pred.size() != truth.size()) throw ShapeError("mask_iou: mask sizes differ");
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool p = pred[i] >= threshold, t = truth[i] >= 0.5;
            inter += p && t;
            uni += p || t;
        }
    }
    double value() const { return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni); }
};

// ---------------------------------------------------------------------------
// Mask-SSIM

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;
};

template <typename T>
Tensor<double> grayscale(const Tensor<T>& img) {
    require_rank(img, 3, "grayscale");
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor<double> g({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        double s = 0;
        for (std::size_t ch = 0; ch < c; ++ch) s += img[i * c + ch];
        g[i] = s / static_cast<double>(c);
    }
    return g;
}

/// Per-pixel SSIM map of two grayscale images; Gaussian windows are truncated
/// at the border and renormalized over the pixels that remain.
inline Tensor<double> ssim_map(const Tensor<double>& x, const Tensor<double>& y, const SsimOptions& opt = {}) {
    require_shape(y, x.shape(), "ssim_map");
    const long h = long(x.dim(0)), w = long(x.dim(1)), r = long(opt.window / 2);
    std::vector<double> g(opt.window);
    for (long i = -r; i <= r; ++i) g[i + r] = std::exp(-0.5 * double(i * i) / (opt.sigma * opt.sigma));
    const double c1 = std::pow(0.01 * opt.dynamic_range, 2), c2 = std::pow(0.03 * opt.dynamic_range, 2);
    Tensor<double> out({std::size_t(h), std::size_t(w)});
    for (long py = 0; py < h; ++py)
        for (long px = 0; px < w; ++px) {
            double ws = 0, mx = 0, my = 0;
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx) {
                    const long yy = py + dy, xx = px + dx;
                    if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
                    const double wt = g[dy + r] * g[dx + r];
                    ws += wt;
                    mx += wt * x.at(yy, xx);
                    my += wt * y.at(yy, xx);
                }
            mx /= ws;
            my /= ws;
            double vx = 0, vy = 0, cxy = 0;
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx) {
                    const long yy = py + dy, xx = px + dx;
                    if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
                    const double wt = g[dy + r] * g[dx + r] / ws;
                    const double a = x.at(yy, xx) - mx, b = y.at(yy, xx) - my;
                    vx += wt * a * a;
                    vy += wt * b * b;
                    cxy += wt * a * b;
                }
            out.at(py, px) = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    return out;
}

/// Mean SSIM over window centres inside `face_mask` (H, W).
template <typename T>
double mask_ssim(const Tensor<T>& forged, const Tensor<T>& original, const Tensor<T>& face_mask,
                 const SsimOptions& opt = {}) {
    require_shape(original, forged.shape(), "mask_ssim images");
    require_shape(face_mask, Shape{forged.dim(0), forged.dim(1)}, "mask_ssim mask");
    const auto map = ssim_map(grayscale(forged), grayscale(original), opt);
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < map.size(); ++i)
        if (face_mask[i] > 0.5) {
            acc += map[i];
            ++n;
        }
    if (n == 0) throw DataError("mask_ssim: face mask is empty");
    return acc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// perceptual distance

/// A frozen stack of conv + ReLU stages; every stage output is a tap.
struct FeaturePyramid {
    struct Stage {
        Tensor<double> weight;  // (k, k, Cin, Cout)
        Tensor<double> bias;
        std::size_t stride = 1, pad = 0;
        bool relu = true;
    };
    std::vector<Stage> stages;

    /// The fixed 3-16-32-64-64-64 random pyramid with stride-2 3x3 stages.
    static FeaturePyramid standard(std::uint64_t seed = 2024) {
        FeaturePyramid p;
        Rng rng(seed);
        const std::size_t widths[] = {3, 16, 32, 64, 64, 64};
        for (std::size_t s = 0; s + 1 < std::size(widths); ++s) {
            Stage st;
            const std::size_t cin = widths[s], cout = widths[s + 1];
            st.weight = Tensor<double>({3, 3, cin, cout});
            const double bound = std::sqrt(6.0 / double(9 * cin));
            for (auto& v : st.weight.values()) v = rng.uniform(-bound, bound);
            st.bias = Tensor<double>({cout});
            st.stride = 2;
            st.pad = 1;
            p.stages.push_back(std::move(st));
        }
        return p;
    }

    template <typename T>
    std::vector<Tensor<double>> taps(const Tensor<T>& image) const {
        Graph<double> g(false);
        Var<double> x = g.input(image.template cast<double>());
        std::vector<Tensor<double>> out;
        for (const Stage& s : stages) {
            x = ops::conv2d(x, g.input(s.weight), g.input(s.bias), s.stride, s.pad);
            if (s.relu) x = ops::relu(x);
            out.push_back(x.value());
        }
        return out;
    }
};

/// Mean over taps of the mean squared feature difference.
template <typename T>
double perceptual_distance(const Tensor<T>& a, const Tensor<T>& b,
                           const FeaturePyramid& pyramid = FeaturePyramid::standard()) {
    require_shape(b, a.shape(), "perceptual_distance");
    require_rank(a, 3, "perceptual_distance");
    if (pyramid.stages.empty()) throw ConfigError("perceptual_distance: empty pyramid");
    const auto ta = pyramid.taps(a), tb = pyramid.taps(b);
    double acc = 0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < ta[i].size(); ++j) s += (ta[i][j] - tb[i][j]) * (ta[i][j] - tb[i][j]);
        acc += s / static_cast<double>(ta[i].size());
    }
    return acc / static_cast<double>(ta.size());
}

// ---------------------------------------------------------------------------
// warping error

/// Bilinear sample of (H, W, C) at real coordinates; nullopt outside the image.
template <typename T>
std::optional<std::vector<double>> bilinear_sample(const Tensor<T>& img, double y, double x) {
    const long h = long(img.dim(0)), w = long(img.dim(1));
    const std::size_t c = img.dim(2);
    constexpr double tol = 1e-9;
    if (y < -tol || x < -tol || y > double(h - 1) + tol || x > double(w - 1) + tol) return std::nullopt;
    y = std::clamp(y, 0.0, double(h - 1));
    x = std::clamp(x, 0.0, double(w - 1));
    const long y0 = long(std::floor(y)), x0 = long(std::floor(x));
    const long y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = y - double(y0), fx = x - double(x0);
    std::vector<double> out(c);
    for (std::size_t ch = 0; ch < c; ++ch)
        out[ch] = (1 - fy) * ((1 - fx) * img.at(y0, x0, ch) + fx * img.at(y0, x1, ch)) +
                  fy * ((1 - fx) * img.at(y1, x0, ch) + fx * img.at(y1, x1, ch));
    return out;
}

/// Mean squared difference between frame_t1 and frame_t moved along `flow`
/// (H, W, 2) as (dy, dx): warped(p) = frame_t(p - flow(p)). Pixels marked 1 in
/// `occlusion` (H, W), or whose source falls outside the frame, are skipped.
/// Returns 0 when nothing is visible.
template <typename T>
double ewarp(const Tensor<T>& frame_t, const Tensor<T>& frame_t1, const Tensor<T>& flow,
             const Tensor<T>* occlusion = nullptr) {
    require_rank(frame_t, 3, "ewarp frame");
    require_shape(frame_t1, frame_t.shape(), "ewarp frames");
    const std::size_t h = frame_t.dim(0), w = frame_t.dim(1), c = frame_t.dim(2);
    require_shape(flow, Shape{h, w, 2}, "ewarp flow");
    if (occlusion) require_shape(*occlusion, Shape{h, w}, "ewarp occlusion");
    if (!flow.all_finite()) throw NumericError("ewarp: flow contains non-finite values");
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (occlusion && occlusion->at(y, x) > 0.5) continue;
            auto src = bilinear_sample(frame_t, double(y) - flow.at(y, x, 0), double(x) - flow.at(y, x, 1));
            if (!src) continue;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double d = frame_t1.at(y, x, ch) - (*src)[ch];
                acc += d * d;
            }
            n += c;
        }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

template <typename T>
double ewarp(const Tensor<T>& frame_t, const Tensor<T>& frame_t1, const Tensor<T>& flow, const Tensor<T>& occlusion) {
    return ewarp(frame_t, frame_t1, flow, &occlusion);
}

// ---------------------------------------------------------------------------
// reports and exports

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::size_t n = 0;
    std::string config_hash;
};

inline nlohmann::ordered_json to_json(const MetricReport& r) {
    return {{"metric", r.metric}, {"value", r.value}, {"n", r.n}, {"config_hash", r.config_hash}};
}

inline nlohmann::ordered_json to_json(const std::vector<MetricReport>& rs) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rs) arr.push_back(to_json(r));
    return arr;
}

/// CSV rows (id, label, f0 .. f{D-1}) of the frame model's pooled features.
template <typename T>
void export_features(const M2TRModel<T>& model, const Manifest& data, const std::filesystem::path& out) {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw DataError("cannot write " + out.string());
    const std::size_t d = model.config().feature_dim;
    os << "id,label";
    for (std::size_t j = 0; j < d; ++j) os << ",f" << j;
    os << '\n';
    char buf[32];
    for (std::size_t i = 0; i < data.entries.size(); ++i) {
        const Sample s = load_sample(data, i);
        const auto p = model.predict(s.image.template cast<T>());
        os << s.id << ',' << s.label;
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(p.feature[j]));
            os << buf;
        }
        os << '\n';
    }
}

}  // namespace m2tr
