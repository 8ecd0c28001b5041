#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "m2tr/blocks.hpp"
#include "m2tr/errors.hpp"
#include "m2tr/graph.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/params.hpp"
#include "m2tr/rng.hpp"

namespace m2tr {

struct ModelConfig {
    std::size_t image_size = 64;
    std::size_t stem_channels = 32;
    std::size_t feature_dim = 128;
    std::size_t n_stack = 4;
    std::vector<std::size_t> patch_sides{16, 8, 4, 2};
    bool ablate_mt = false;
    bool ablate_ff = false;
    bool ablate_cmf = false;
    AttentionScale attention_scale = AttentionScale::paper;
    QuerySource cmf_query_source = QuerySource::rgb;

    std::size_t grid_side() const { return image_size / 4; }

    /// Patch sides {S, S/2, S/4, S/8} of the feature grid side S.
    static std::vector<std::size_t> default_patch_sides(std::size_t image_size) {
        std::vector<std::size_t> out;
        for (std::size_t div = 1; div <= 8; div *= 2)
            if (image_size / 4 / div >= 1) out.push_back(image_size / 4 / div);
        return out;
    }

    void validate() const {
        if (image_size == 0 || image_size % 32)
            throw ConfigError("image_size must be a positive multiple of 32, got " + std::to_string(image_size));
        if (stem_channels < 2 || stem_channels % 2) throw ConfigError("stem_channels must be even and >= 2");
        if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
        if (n_stack == 0) throw ConfigError("n_stack must be positive");
        if (patch_sides.empty()) throw ConfigError("patch_sides must not be empty");
        for (std::size_t r : patch_sides)
            if (r == 0 || grid_side() % r)
                throw ConfigError("patch side " + std::to_string(r) + " does not divide image_size/4 = " +
                                  std::to_string(grid_side()));
    }
};

/// Frame-level detector: conv stem, N stacked (multi-scale transformer ‖
/// frequency filter -> fusion) stages, a classification head producing the
/// feature f and probability, and a mask decoder.
template <typename T>
class M2TRModel {
public:
    struct Stage {
        std::optional<MultiScaleTransformerBlock> mst;
        std::optional<FrequencyFilterBlock> ff;
        std::optional<CrossModalityFusionBlock> cmf;
        std::optional<ConcatFusionBlock> concat;
    };

    struct Outputs {
        Var<T> probability;  // (1, 1)
        Var<T> logit;        // (1, 1)
        Var<T> mask;         // (H, W, 1)
        Var<T> feature;      // (1, D)
        Var<T> features_out; // (H/4, W/4, C)
        Var<T> mask_logit;   // (H, W, 1), before the sigmoid
    };

    /// Plain-value result of an inference pass.
    struct Prediction {
        T score;
        Tensor<T> mask;     // (H, W)
        Tensor<T> feature;  // (D)
    };

    M2TRModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const std::size_t c = cfg_.stem_channels, d = cfg_.feature_dim;
        const GridShape grid{cfg_.grid_side(), cfg_.grid_side(), c};

        stem_[0] = make_conv(ps_, "stem.conv0", 3, 3, c / 2, 2, 1, rng, 2.0);
        stem_[1] = make_conv(ps_, "stem.conv1", 3, c / 2, c, 2, 1, rng, 2.0);
        stem_[2] = make_conv(ps_, "stem.conv2", 3, c, c, 1, 1, rng);

        for (std::size_t i = 0; i < cfg_.n_stack; ++i) {
            const std::string p = "stage" + std::to_string(i);
            Stage s;
            if (!cfg_.ablate_mt)
                s.mst.emplace(ps_, p + ".mst", grid, cfg_.patch_sides, cfg_.attention_scale, rng);
            if (!cfg_.ablate_ff) {
                s.ff.emplace(ps_, p + ".ff", grid);
                if (cfg_.ablate_cmf)
                    s.concat.emplace(ps_, p + ".concat", grid, rng);
                else
                    s.cmf.emplace(ps_, p + ".cmf", grid, cfg_.attention_scale, cfg_.cmf_query_source, rng);
            }
            stages_.push_back(std::move(s));
        }

        head_[0] = make_conv(ps_, "head.conv0", 3, c, d, 2, 1, rng, 2.0);
        head_[1] = make_conv(ps_, "head.conv1", 3, d, d, 2, 1, rng);
        classifier_ = make_dense(ps_, "head.classifier", d, 1, rng);

        decoder_[0] = make_conv(ps_, "decoder.conv0", 3, c, c, 1, 1, rng, 2.0);
        decoder_[1] = make_conv(ps_, "decoder.conv1", 3, c, c / 2, 1, 1, rng, 2.0);
        mask_out_ = make_conv(ps_, "decoder.out", 1, c / 2, 1, 1, 0, rng);
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    ParameterStore<T>& params() noexcept { return ps_; }
    const ParameterStore<T>& params() const noexcept { return ps_; }
    const std::vector<Stage>& stages() const noexcept { return stages_; }

    /// Same architecture in another precision, sharing parameter values.
    template <typename U>
    M2TRModel<U> cast() const {
        M2TRModel<U> out(cfg_, 0);
        out.params().assign_from(ps_);
        return out;
    }

    /// Pixels are shifted from [0, 1] to [-0.5, 0.5] before the first conv.
    Var<T> stem(Graph<T>& g, Var<T> image) const {
        Var<T> centred = ops::add(image, g.input(Tensor<T>(image.shape(), T(-0.5))));
        Var<T> x = ops::relu(apply(g, ps_, stem_[0], centred));
        x = ops::relu(apply(g, ps_, stem_[1], x));
        return apply(g, ps_, stem_[2], x);
    }

    Var<T> stage(Graph<T>& g, std::size_t i, Var<T> m) const {
        const Stage& s = stages_.at(i);
        Var<T> t = s.mst ? s.mst->forward(g, ps_, m) : m;
        if (!s.ff) return t;
        Var<T> w = s.ff->forward(g, ps_, m);
        return s.cmf ? s.cmf->forward(g, ps_, t, w) : s.concat->forward(g, ps_, t, w);
    }

    /// Returns (feature (1, D), logit (1, 1)).
    std::pair<Var<T>, Var<T>> classification_head(Graph<T>& g, Var<T> m_out) const {
        Var<T> x = ops::relu(apply(g, ps_, head_[0], m_out));
        x = apply(g, ps_, head_[1], x);
        Var<T> f = ops::global_avg_pool(x);
        return {f, apply(g, ps_, classifier_, f)};
    }

    /// Probability from a (1, D) feature: the final dense layer and sigmoid.
    Var<T> classify_feature(Graph<T>& g, Var<T> feature) const {
        return ops::sigmoid(apply(g, ps_, classifier_, feature));
    }

    /// Mask logits (H, W, 1).
    Var<T> decoder_logits(Graph<T>& g, Var<T> m_out) const {
        Var<T> x = ops::relu(apply(g, ps_, decoder_[0], m_out));
        x = ops::upsample_bilinear(x, 2);
        x = ops::relu(apply(g, ps_, decoder_[1], x));
        x = ops::upsample_bilinear(x, 2);
        return apply(g, ps_, mask_out_, x);
    }

    Var<T> decoder(Graph<T>& g, Var<T> m_out) const { return ops::sigmoid(decoder_logits(g, m_out)); }

    Outputs forward(Graph<T>& g, Var<T> image) const {
        const Shape expected{cfg_.image_size, cfg_.image_size, 3};
        if (image.shape() != expected)
            throw ConfigError("model expects image shape " + shape_str(expected) + ", got " +
                              shape_str(image.shape()));
        Var<T> m = stem(g, image);
        for (std::size_t i = 0; i < stages_.size(); ++i) m = stage(g, i, m);
        auto [f, logit] = classification_head(g, m);
        Var<T> mask_logit = decoder_logits(g, m);
        return {ops::sigmoid(logit), logit, ops::sigmoid(mask_logit), f, m, mask_logit};
    }

    Prediction predict(const Tensor<T>& image) const {
        Graph<T> g(false);
        Outputs o = forward(g, g.input(image));
        const Shape& ms = o.mask.shape();
        return {o.probability.value()[0], o.mask.value().reshaped({ms[0], ms[1]}),
                o.feature.value().reshaped({cfg_.feature_dim})};
    }

private:
    ModelConfig cfg_;
    ParameterStore<T> ps_;
    ConvParams stem_[3];
    std::vector<Stage> stages_;
    ConvParams head_[2];
    DenseParams classifier_;
    ConvParams decoder_[2];
    ConvParams mask_out_;
};

/// Indices of k frames at uniform intervals: floor(i * n / k).
inline std::vector<std::size_t> sample_frame_indices(std::size_t n, std::size_t k) {
    if (k == 0 || k > n)
        throw ConfigError("cannot sample " + std::to_string(k) + " frames from " + std::to_string(n));
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i * n / k;
    return idx;
}

template <typename Frame>
std::vector<Frame> sample_frames(const std::vector<Frame>& video, std::size_t k) {
    std::vector<Frame> out;
    for (std::size_t i : sample_frame_indices(video.size(), k)) out.push_back(video[i]);
    return out;
}

/// Clip score from the mean of per-frame features, classified by the frame model's head.
template <typename T>
T video_mean_forward(const M2TRModel<T>& model, const std::vector<Tensor<T>>& frames) {
    if (frames.empty()) throw ConfigError("video_mean_forward: no frames");
    const std::size_t d = model.config().feature_dim;
    Tensor<T> mean({1, d});
    for (const auto& f : frames) {
        const auto p = model.predict(f);
        for (std::size_t j = 0; j < d; ++j) mean[j] += p.feature[j];
    }
    for (auto& v : mean.values()) v /= static_cast<T>(frames.size());
    Graph<T> g(false);
    return model.classify_feature(g, g.input(mean)).value()[0];
}

struct TemporalConfig {
    std::size_t feature_dim = 128;
    std::size_t frames_per_clip = 16;
    std::size_t layers = 4;
    std::size_t heads = 8;
    std::size_t ffn_mult = 2;
};

/// Temporal transformer over per-frame features: learned positional encoding,
/// pre-norm encoder layers with multi-head self-attention, mean pooling and a
/// two-layer MLP producing one logit.
template <typename T>
class TemporalHead {
public:
    struct Layer {
        std::size_t ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
        DenseParams wq, wk, wv, wo, ff1, ff2;
    };

    TemporalHead(const TemporalConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg_.heads == 0 || cfg_.feature_dim % cfg_.heads)
            throw ConfigError("feature_dim must be divisible by the number of temporal heads");
        if (cfg_.frames_per_clip == 0) throw ConfigError("frames_per_clip must be positive");
        Rng rng(seed);
        const std::size_t d = cfg_.feature_dim;
        pos_ = ps_.add_uniform("temporal.pos", {cfg_.frames_per_clip, d}, 0.02, rng);
        for (std::size_t i = 0; i < cfg_.layers; ++i) {
            const std::string p = "temporal.layer" + std::to_string(i);
            Layer l;
            l.ln1_gamma = ps_.add(p + ".ln1.gamma", Tensor<T>::ones({d}));
            l.ln1_beta = ps_.add(p + ".ln1.beta", Tensor<T>({d}));
            l.wq = make_dense(ps_, p + ".wq", d, d, rng);
            l.wk = make_dense(ps_, p + ".wk", d, d, rng);
            l.wv = make_dense(ps_, p + ".wv", d, d, rng);
            l.wo = make_dense(ps_, p + ".wo", d, d, rng, 0.5);
            l.ln2_gamma = ps_.add(p + ".ln2.gamma", Tensor<T>::ones({d}));
            l.ln2_beta = ps_.add(p + ".ln2.beta", Tensor<T>({d}));
            l.ff1 = make_dense(ps_, p + ".ff1", d, cfg_.ffn_mult * d, rng, 2.0);
            l.ff2 = make_dense(ps_, p + ".ff2", cfg_.ffn_mult * d, d, rng, 0.5);
            layers_.push_back(l);
        }
        mlp_[0] = make_dense(ps_, "temporal.mlp0", d, d, rng, 2.0);
        mlp_[1] = make_dense(ps_, "temporal.mlp1", d, 1, rng);
    }

    const TemporalConfig& config() const noexcept { return cfg_; }
    ParameterStore<T>& params() noexcept { return ps_; }
    const ParameterStore<T>& params() const noexcept { return ps_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::size_t positional() const noexcept { return pos_; }

    /// Token representations (F, D) after all encoder layers.
    Var<T> encode(Graph<T>& g, Var<T> frame_features) const {
        const Shape expected{cfg_.frames_per_clip, cfg_.feature_dim};
        if (frame_features.shape() != expected)
            throw ConfigError("temporal head expects " + std::to_string(cfg_.frames_per_clip) +
                              " frame features of width " + std::to_string(cfg_.feature_dim) + ", got " +
                              shape_str(frame_features.shape()));
        Var<T> x = ops::add(frame_features, ps_.bind(g, pos_));
        const std::size_t dh = cfg_.feature_dim / cfg_.heads;
        const T inv = T{1} / std::sqrt(static_cast<T>(dh));
        for (const Layer& l : layers_) {
            Var<T> h = ops::layer_norm_rows(x, ps_.bind(g, l.ln1_gamma), ps_.bind(g, l.ln1_beta));
            Var<T> q = apply(g, ps_, l.wq, h), k = apply(g, ps_, l.wk, h), v = apply(g, ps_, l.wv, h);
            std::vector<Var<T>> heads;
            for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
                Var<T> qh = ops::slice_cols(q, hd * dh, dh), kh = ops::slice_cols(k, hd * dh, dh);
                Var<T> vh = ops::slice_cols(v, hd * dh, dh);
                heads.push_back(ops::matmul(ops::softmax_rows(ops::scale(ops::matmul(qh, kh, true), inv)), vh));
            }
            x = ops::add(x, apply(g, ps_, l.wo, ops::concat_cols(heads)));
            Var<T> h2 = ops::layer_norm_rows(x, ps_.bind(g, l.ln2_gamma), ps_.bind(g, l.ln2_beta));
            x = ops::add(x, apply(g, ps_, l.ff2, ops::relu(apply(g, ps_, l.ff1, h2))));
        }
        return x;
    }

    /// Clip probability (1, 1).
    Var<T> forward(Graph<T>& g, Var<T> frame_features) const {
        Var<T> pooled = ops::mean_rows(encode(g, frame_features));
        Var<T> hidden = ops::relu(apply(g, ps_, mlp_[0], pooled));
        return ops::sigmoid(apply(g, ps_, mlp_[1], hidden));
    }

private:
    TemporalConfig cfg_;
    ParameterStore<T> ps_;
    std::size_t pos_ = 0;
    std::vector<Layer> layers_;
    DenseParams mlp_[2];
};

/// Stacks per-frame features of the (frozen) frame model into (F, D).
template <typename T>
Tensor<T> frame_features(const M2TRModel<T>& model, const std::vector<Tensor<T>>& frames) {
    const std::size_t d = model.config().feature_dim;
    Tensor<T> out({frames.size(), d});
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto p = model.predict(frames[i]);
        std::copy(p.feature.data(), p.feature.data() + d, out.data() + i * d);
    }
    return out;
}

template <typename T>
T video_temporal_forward(const M2TRModel<T>& model, const TemporalHead<T>& head,
                         const std::vector<Tensor<T>>& frames) {
    if (frames.size() != head.config().frames_per_clip)
        throw ConfigError("temporal fusion needs exactly " + std::to_string(head.config().frames_per_clip) +
                          " frames, got " + std::to_string(frames.size()));
    if (head.config().feature_dim != model.config().feature_dim)
        throw ConfigError("temporal head width does not match the frame model feature_dim");
    Graph<T> g(false);
    return head.forward(g, g.input(frame_features(model, frames))).value()[0];
}

}  // namespace m2tr
