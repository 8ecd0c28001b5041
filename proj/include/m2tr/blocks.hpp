#pragma once

// The three per-stage blocks: multi-scale patch attention (RGB stream),
// learnable spectral filtering (frequency stream) and the cross-modality
// attention that fuses them. All are shape-preserving on (H', W', C) maps.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "m2tr/errors.hpp"
#include "m2tr/graph.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/params.hpp"
#include "m2tr/rng.hpp"

namespace m2tr {

/// Attention logit normalizer. `paper` divides patch attention by the token
/// width C_h and fusion attention by sqrt(H'·W'·C); `sqrt_dim` divides both
/// by the square root of the token width.
enum class AttentionScale { paper, sqrt_dim };

/// Which stream provides the fusion queries; the other provides keys and values.
enum class QuerySource { rgb, freq };

struct GridShape {
    std::size_t h = 0, w = 0, c = 0;
    Shape shape() const { return {h, w, c}; }
};

/// conv3x3 -> ReLU -> conv3x3, plus a 1x1 projection skip; maps Cin channels to Cout.
struct ResidualBlock {
    ConvParams conv_a, conv_b, skip;

    template <typename T>
    static ResidualBlock make(ParameterStore<T>& ps, const std::string& prefix, std::size_t cin, std::size_t cout,
                              Rng& rng) {
        ResidualBlock r;
        r.conv_a = make_conv(ps, prefix + ".conv_a", 3, cin, cout, 1, 1, rng, 2.0);
        r.conv_b = make_conv(ps, prefix + ".conv_b", 3, cout, cout, 1, 1, rng, 0.5);
        r.skip = make_conv(ps, prefix + ".skip", 1, cin, cout, 1, 0, rng, 0.5);
        return r;
    }

    template <typename T>
    Var<T> forward(Graph<T>& g, const ParameterStore<T>& ps, Var<T> x) const {
        Var<T> h = ops::relu(apply(g, ps, conv_a, x));
        return ops::add(apply(g, ps, conv_b, h), apply(g, ps, skip, x));
    }
};

/// Patch self-attention at several patch sizes, one head per size.
///
/// Each head embeds every pixel's C channels with query/key/value maps shared
/// across positions, cuts the embedded maps into non-overlapping r x r patches,
/// flattens each patch into a token of width r*r*C, attends over the tokens and
/// folds the result back onto the grid. Heads are concatenated along channels
/// and merged back to C channels by a ResidualBlock.
class MultiScaleTransformerBlock {
public:
    struct Head {
        std::size_t patch = 0;
        ConvParams query, key, value;
    };

    MultiScaleTransformerBlock() = default;

    template <typename T>
    MultiScaleTransformerBlock(ParameterStore<T>& ps, const std::string& prefix, GridShape grid,
                               const std::vector<std::size_t>& patch_sides, AttentionScale scale, Rng& rng)
        : grid_(grid), scale_(scale) {
        if (patch_sides.empty()) throw ConfigError("multi-scale transformer needs at least one patch size");
        for (std::size_t r : patch_sides) {
            if (r == 0 || grid.h % r || grid.w % r)
                throw ConfigError("patch side " + std::to_string(r) + " does not divide the " +
                                  std::to_string(grid.h) + "x" + std::to_string(grid.w) + " feature grid");
        }
        for (std::size_t i = 0; i < patch_sides.size(); ++i) {
            const std::string hp = prefix + ".head" + std::to_string(i);
            Head h;
            h.patch = patch_sides[i];
            h.query = make_conv(ps, hp + ".query", 1, grid.c, grid.c, 1, 0, rng);
            h.key = make_conv(ps, hp + ".key", 1, grid.c, grid.c, 1, 0, rng);
            h.value = make_conv(ps, hp + ".value", 1, grid.c, grid.c, 1, 0, rng);
            heads_.push_back(h);
        }
        merge_ = ResidualBlock::make(ps, prefix + ".merge", grid.c * heads_.size(), grid.c, rng);
    }

    const std::vector<Head>& heads() const noexcept { return heads_; }
    const ResidualBlock& merge() const noexcept { return merge_; }
    GridShape grid() const noexcept { return grid_; }

    std::size_t token_count(std::size_t head) const {
        const std::size_t r = heads_.at(head).patch;
        return (grid_.h / r) * (grid_.w / r);
    }
    std::size_t token_width(std::size_t head) const {
        const std::size_t r = heads_.at(head).patch;
        return r * r * grid_.c;
    }

    /// Attention output of one head, folded back to (H', W', C).
    template <typename T>
    Var<T> head_forward(Graph<T>& g, const ParameterStore<T>& ps, std::size_t head, Var<T> m) const {
        const Head& h = heads_.at(head);
        Var<T> q = ops::extract_patches(apply(g, ps, h.query, m), h.patch);
        Var<T> k = ops::extract_patches(apply(g, ps, h.key, m), h.patch);
        Var<T> v = ops::extract_patches(apply(g, ps, h.value, m), h.patch);
        const auto width = static_cast<T>(token_width(head));
        const T norm = scale_ == AttentionScale::paper ? width : std::sqrt(width);
        Var<T> attn = ops::softmax_rows(ops::scale(ops::matmul(q, k, true), T{1} / norm));
        return ops::fold_patches(ops::matmul(attn, v), grid_.h, grid_.w, grid_.c, h.patch);
    }

    template <typename T>
    Var<T> forward(Graph<T>& g, const ParameterStore<T>& ps, Var<T> m) const {
        if (m.shape() != grid_.shape())
            throw ShapeError("multi-scale transformer: input " + shape_str(m.shape()) + " vs grid " +
                             shape_str(grid_.shape()));
        std::vector<Var<T>> outs;
        for (std::size_t i = 0; i < heads_.size(); ++i) outs.push_back(head_forward(g, ps, i, m));
        Var<T> cat = outs.size() == 1 ? outs[0] : ops::concat_channels(outs);
        return merge_.forward(g, ps, cat);
    }

private:
    GridShape grid_;
    AttentionScale scale_ = AttentionScale::paper;
    std::vector<Head> heads_;
    ResidualBlock merge_;
};

/// W = Re(IFFT2(G ⊙ FFT2(M))) with a learnable real filter G the size of the grid.
class FrequencyFilterBlock {
public:
    FrequencyFilterBlock() = default;

    template <typename T>
    FrequencyFilterBlock(ParameterStore<T>& ps, const std::string& prefix, GridShape grid) : grid_(grid) {
        filter_ = ps.add(prefix + ".filter", Tensor<T>::ones(grid.shape()));
    }

    std::size_t filter() const noexcept { return filter_; }

    template <typename T>
    Var<T> forward(Graph<T>& g, const ParameterStore<T>& ps, Var<T> m) const {
        if (m.shape() != grid_.shape())
            throw ShapeError("frequency filter: input " + shape_str(m.shape()) + " vs filter " +
                             shape_str(grid_.shape()));
        return ops::ifft2d_real(ops::spectral_filter(ops::fft2d(m), ps.bind(g, filter_)));
    }

private:
    GridShape grid_;
    std::size_t filter_ = 0;
};

/// Query-key-value fusion of the RGB (T) and frequency (W) features:
/// M = conv3x3(softmax(Q K^T / s) V + T).
class CrossModalityFusionBlock {
public:
    CrossModalityFusionBlock() = default;

    template <typename T>
    CrossModalityFusionBlock(ParameterStore<T>& ps, const std::string& prefix, GridShape grid, AttentionScale scale,
                             QuerySource source, Rng& rng)
        : grid_(grid), scale_(scale), source_(source) {
        query_ = make_conv(ps, prefix + ".query", 1, grid.c, grid.c, 1, 0, rng);
        key_ = make_conv(ps, prefix + ".key", 1, grid.c, grid.c, 1, 0, rng);
        value_ = make_conv(ps, prefix + ".value", 1, grid.c, grid.c, 1, 0, rng);
        out_ = make_conv(ps, prefix + ".out", 3, grid.c, grid.c, 1, 1, rng);
    }

    const ConvParams& query() const noexcept { return query_; }
    const ConvParams& key() const noexcept { return key_; }
    const ConvParams& value() const noexcept { return value_; }
    const ConvParams& out() const noexcept { return out_; }

    /// The fused attention output before the residual add, shape (H', W', C).
    template <typename T>
    Var<T> attention(Graph<T>& g, const ParameterStore<T>& ps, Var<T> t, Var<T> w) const {
        if (t.shape() != grid_.shape() || w.shape() != grid_.shape())
            throw ShapeError("cross modality fusion: inputs " + shape_str(t.shape()) + " and " +
                             shape_str(w.shape()) + " vs grid " + shape_str(grid_.shape()));
        const Var<T> query_src = source_ == QuerySource::rgb ? t : w;
        const Var<T> kv_src = source_ == QuerySource::rgb ? w : t;
        const Shape flat{grid_.h * grid_.w, grid_.c};
        Var<T> q = ops::reshape(apply(g, ps, query_, query_src), flat);
        Var<T> k = ops::reshape(apply(g, ps, key_, kv_src), flat);
        Var<T> v = ops::reshape(apply(g, ps, value_, kv_src), flat);
        const T norm = scale_ == AttentionScale::paper
                           ? std::sqrt(static_cast<T>(grid_.h * grid_.w * grid_.c))
                           : std::sqrt(static_cast<T>(grid_.c));
        Var<T> attn = ops::softmax_rows(ops::scale(ops::matmul(q, k, true), T{1} / norm));
        return ops::reshape(ops::matmul(attn, v), grid_.shape());
    }

    template <typename T>
    Var<T> forward(Graph<T>& g, const ParameterStore<T>& ps, Var<T> t, Var<T> w) const {
        return apply(g, ps, out_, ops::add(attention(g, ps, t, w), t));
    }

private:
    GridShape grid_;
    AttentionScale scale_ = AttentionScale::paper;
    QuerySource source_ = QuerySource::rgb;
    ConvParams query_, key_, value_, out_;
};

/// Fusion by channel concatenation and a 3x3 convolution (used when the
/// attention fusion is ablated).
class ConcatFusionBlock {
public:
    ConcatFusionBlock() = default;

    template <typename T>
    ConcatFusionBlock(ParameterStore<T>& ps, const std::string& prefix, GridShape grid, Rng& rng) {
        conv_ = make_conv(ps, prefix + ".conv", 3, 2 * grid.c, grid.c, 1, 1, rng);
    }

    template <typename T>
    Var<T> forward(Graph<T>& g, const ParameterStore<T>& ps, Var<T> t, Var<T> w) const {
        return apply(g, ps, conv_, ops::concat_channels<T>({t, w}));
    }

private:
    ConvParams conv_;
};

}  // namespace m2tr
