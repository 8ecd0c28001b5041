#include <gtest/gtest.h>

#include "m2tr/blocks.hpp"
#include "m2tr/fft.hpp"
#include "m2tr/gradcheck.hpp"
#include "oracles.hpp"

using namespace m2tr;

namespace {

template <typename T>
Tensor<T> run_mst(const ParameterStore<T>& ps, const MultiScaleTransformerBlock& b, const Tensor<T>& x) {
    Graph<T> g(false);
    return b.forward(g, ps, g.input(x)).value();
}

template <typename T>
Tensor<T> run_ff(const ParameterStore<T>& ps, const FrequencyFilterBlock& b, const Tensor<T>& x) {
    Graph<T> g(false);
    return b.forward(g, ps, g.input(x)).value();
}

template <typename T>
Tensor<T> run_cmf(const ParameterStore<T>& ps, const CrossModalityFusionBlock& b, const Tensor<T>& t,
                  const Tensor<T>& w) {
    Graph<T> g(false);
    return b.forward(g, ps, g.input(t), g.input(w)).value();
}

}  // namespace

TEST(MultiScaleTransformer, TokenCountsPerScale) {
    Rng rng(1);
    ParameterStore<float> ps;
    MultiScaleTransformerBlock b(ps, "mst", {16, 16, 4}, {16, 8, 4, 2}, AttentionScale::paper, rng);
    EXPECT_EQ(b.token_count(0), 1u);
    EXPECT_EQ(b.token_count(1), 4u);
    EXPECT_EQ(b.token_count(2), 16u);
    EXPECT_EQ(b.token_count(3), 64u);
    EXPECT_EQ(b.token_width(3), 2u * 2u * 4u);
    auto x = oracle::random_tensor<float>({16, 16, 4}, rng);
    EXPECT_EQ(run_mst(ps, b, x).shape(), x.shape());
}

TEST(MultiScaleTransformer, IndivisiblePatchIsConfigError) {
    Rng rng(2);
    ParameterStore<float> ps;
    EXPECT_THROW(MultiScaleTransformerBlock(ps, "mst", {12, 12, 2}, {8}, AttentionScale::paper, rng), ConfigError);
}

TEST(MultiScaleTransformer, ZeroQueryGivesUniformAttention) {
    Rng rng(3);
    ParameterStore<double> ps;
    MultiScaleTransformerBlock b(ps, "mst", {8, 8, 3}, {2, 4}, AttentionScale::paper, rng);
    oracle::randomize(ps, rng);
    for (const auto& h : b.heads()) {
        ps.value(h.query.weight).fill(0.0);
        ps.value(h.query.bias).fill(0.0);
    }
    auto x = oracle::random_tensor<double>({8, 8, 3}, rng);
    for (std::size_t hd = 0; hd < b.heads().size(); ++hd) {
        Graph<double> g(false);
        auto in = g.input(x);
        auto out = b.head_forward(g, ps, hd, in).value();
        const auto& head = b.heads()[hd];
        auto v = ops::conv2d(in, ps.bind(g, head.value.weight), ps.bind(g, head.value.bias)).value();
        auto vt = ops::extract_patches(v, head.patch);
        auto ot = ops::extract_patches(out, head.patch);
        for (std::size_t j = 0; j < vt.dim(1); ++j) {
            double mean = 0;
            for (std::size_t t = 0; t < vt.dim(0); ++t) mean += vt.at(t, j);
            mean /= static_cast<double>(vt.dim(0));
            for (std::size_t t = 0; t < ot.dim(0); ++t) EXPECT_NEAR(ot.at(t, j), mean, 1e-12);
        }
    }
}

TEST(MultiScaleTransformer, MatchesLoopOracleSingleHead) {
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        ParameterStore<double> ps;
        MultiScaleTransformerBlock b(ps, "mst", {4, 4, 1}, {2}, AttentionScale::paper, rng);
        oracle::randomize(ps, rng);
        auto x = oracle::random_tensor<double>({4, 4, 1}, rng);
        auto got = run_mst(ps, b, x);
        auto ref = oracle::mst_forward(ps, b, x);
        EXPECT_LT(max_abs_diff(got, ref), 1e-5);
    }
}

TEST(MultiScaleTransformer, MatchesLoopOracleMultiScale) {
    Rng rng(5);
    ParameterStore<float> ps;
    MultiScaleTransformerBlock b(ps, "mst", {4, 4, 2}, {4, 2, 1}, AttentionScale::paper, rng);
    oracle::randomize(ps, rng);
    auto x = oracle::random_tensor<float>({4, 4, 2}, rng);
    auto got = run_mst(ps, b, x);
    auto ref = oracle::mst_forward(ps, b, x);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-5);
}

TEST(MultiScaleTransformer, SqrtScaleSwitch) {
    Rng rng(6);
    ParameterStore<double> ps;
    MultiScaleTransformerBlock b(ps, "mst", {4, 4, 2}, {2}, AttentionScale::sqrt_dim, rng);
    oracle::randomize(ps, rng);
    auto x = oracle::random_tensor<double>({4, 4, 2}, rng);
    EXPECT_LT(max_abs_diff(run_mst(ps, b, x), oracle::mst_forward(ps, b, x, false)), 1e-10);
}

TEST(MultiScaleTransformer, AttentionStaysInValueHull) {
    Rng rng(7);
    ParameterStore<double> ps;
    MultiScaleTransformerBlock b(ps, "mst", {8, 8, 2}, {4, 2}, AttentionScale::paper, rng);
    oracle::randomize(ps, rng, -2, 2);
    auto x = oracle::random_tensor<double>({8, 8, 2}, rng);
    for (std::size_t hd = 0; hd < 2; ++hd) {
        Graph<double> g(false);
        auto in = g.input(x);
        const auto& head = b.heads()[hd];
        auto out = ops::extract_patches(b.head_forward(g, ps, hd, in).value(), head.patch);
        auto v = ops::extract_patches(
            ops::conv2d(in, ps.bind(g, head.value.weight), ps.bind(g, head.value.bias)).value(), head.patch);
        for (std::size_t j = 0; j < v.dim(1); ++j) {
            double lo = 1e300, hi = -1e300;
            for (std::size_t t = 0; t < v.dim(0); ++t) {
                lo = std::min(lo, v.at(t, j));
                hi = std::max(hi, v.at(t, j));
            }
            for (std::size_t t = 0; t < out.dim(0); ++t) {
                EXPECT_GE(out.at(t, j), lo - 1e-12);
                EXPECT_LE(out.at(t, j), hi + 1e-12);
            }
        }
    }
}

TEST(FrequencyFilter, OnesIsIdentityZerosIsZero) {
    Rng rng(8);
    ParameterStore<float> ps;
    FrequencyFilterBlock b(ps, "ff", {8, 8, 3});
    auto x = oracle::random_tensor<float>({8, 8, 3}, rng);
    EXPECT_LT(max_abs_diff(run_ff(ps, b, x), x), 1e-5f);
    ps.value(b.filter()).fill(0.0f);
    EXPECT_EQ(run_ff(ps, b, x).max_abs(), 0.0f);
}

TEST(FrequencyFilter, NyquistNotchRemovesCheckerboard) {
    Tensor<double> board({8, 8, 1});
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) board.at(y, x, 0) = (x + y) % 2 ? -1.0 : 1.0;
    // the DFT oracle puts all of the checkerboard's energy in bin (4, 4)
    auto spec = oracle::dft2d(board);
    for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v)
            EXPECT_NEAR(std::abs(spec.at(u, v, 0)), (u == 4 && v == 4) ? 64.0 : 0.0, 1e-9);

    ParameterStore<double> ps;
    FrequencyFilterBlock b(ps, "ff", {8, 8, 1});
    ps.value(b.filter()).at(4, 4, 0) = 0.0;
    EXPECT_LT(run_ff(ps, b, board).max_abs(), 1e-5);
}

TEST(FrequencyFilter, LinearInInput) {
    Rng rng(9);
    ParameterStore<double> ps;
    FrequencyFilterBlock b(ps, "ff", {4, 8, 2});
    oracle::randomize(ps, rng);
    auto x = oracle::random_tensor<double>({4, 8, 2}, rng), y = oracle::random_tensor<double>({4, 8, 2}, rng);
    const double a = 0.7, c = -1.3;
    Tensor<double> mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + c * y[i];
    auto fx = run_ff(ps, b, x), fy = run_ff(ps, b, y), fm = run_ff(ps, b, mix);
    for (std::size_t i = 0; i < mix.size(); ++i) EXPECT_NEAR(fm[i], a * fx[i] + c * fy[i], 1e-5);
}

TEST(FrequencyFilter, SymmetricFilterLeavesNegligibleImaginaryPart) {
    Rng rng(10);
    const std::size_t h = 8, w = 8, c = 2;
    Tensor<double> filter({h, w, c});
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t u2 = (h - u) % h, v2 = (w - v) % w;
                if (u2 * w + v2 < u * w + v) filter.at(u, v, ch) = filter.at(u2, v2, ch);
                else filter.at(u, v, ch) = rng.uniform(0, 2);
            }
    auto x = oracle::random_tensor<double>({h, w, c}, rng);
    auto s = fft2d(x);
    for (std::size_t i = 0; i < filter.size(); ++i) {
        s.re[i] *= filter[i];
        s.im[i] *= filter[i];
    }
    auto full = ifft2d_complex(s);
    double out_norm = 0, im_norm = 0;
    for (std::size_t i = 0; i < full.re.size(); ++i) {
        out_norm += full.re[i] * full.re[i];
        im_norm += full.im[i] * full.im[i];
    }
    EXPECT_LT(std::sqrt(im_norm), 1e-3 * std::sqrt(out_norm));

    ParameterStore<double> ps;
    FrequencyFilterBlock b(ps, "ff", {h, w, c});
    ps.value(b.filter()) = filter;
    EXPECT_LT(max_abs_diff(run_ff(ps, b, x), full.re), 1e-12);
}

TEST(FrequencyFilter, ShapeMismatchThrows) {
    ParameterStore<float> ps;
    FrequencyFilterBlock b(ps, "ff", {4, 4, 2});
    Graph<float> g;
    EXPECT_THROW(b.forward(g, ps, g.input(Tensor<float>({4, 4, 3}))), ShapeError);
}

TEST(CrossModalityFusion, IdenticalValueRowsPassThrough) {
    Rng rng(11);
    const std::size_t c = 3;
    ParameterStore<double> ps;
    CrossModalityFusionBlock b(ps, "cmf", {4, 4, c}, AttentionScale::paper, QuerySource::rgb, rng);
    oracle::randomize(ps, rng);
    ps.value(b.value().weight).fill(0.0);
    for (std::size_t i = 0; i < c; ++i) ps.value(b.value().weight)[i * c + i] = 1.0;
    ps.value(b.value().bias).fill(0.0);
    Tensor<double> w({4, 4, c});
    for (std::size_t p = 0; p < 16; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) w[p * c + ch] = 0.1 * double(ch + 1);
    auto t = oracle::random_tensor<double>({4, 4, c}, rng);
    Graph<double> g(false);
    auto fused = b.attention(g, ps, g.input(t), g.input(w)).value();
    for (std::size_t p = 0; p < 16; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) EXPECT_NEAR(fused[p * c + ch], 0.1 * double(ch + 1), 1e-12);
}

TEST(CrossModalityFusion, ZeroValuesAndCentreKernelGivePureResidual) {
    Rng rng(12);
    const std::size_t c = 2;
    ParameterStore<double> ps;
    CrossModalityFusionBlock b(ps, "cmf", {4, 4, c}, AttentionScale::paper, QuerySource::rgb, rng);
    oracle::randomize(ps, rng);
    ps.value(b.value().weight).fill(0.0);
    ps.value(b.value().bias).fill(0.0);
    auto& out_w = ps.value(b.out().weight);
    out_w.fill(0.0);
    for (std::size_t ch = 0; ch < c; ++ch) out_w[((1 * 3 + 1) * c + ch) * c + ch] = 1.0;
    ps.value(b.out().bias).fill(0.0);
    auto t = oracle::random_tensor<double>({4, 4, c}, rng), w = oracle::random_tensor<double>({4, 4, c}, rng);
    EXPECT_LT(max_abs_diff(run_cmf(ps, b, t, w), t), 1e-12);
}

TEST(CrossModalityFusion, MatchesLoopOracle) {
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        ParameterStore<double> ps;
        CrossModalityFusionBlock b(ps, "cmf", {2, 2, 1}, AttentionScale::paper, QuerySource::rgb, rng);
        oracle::randomize(ps, rng);
        auto t = oracle::random_tensor<double>({2, 2, 1}, rng), w = oracle::random_tensor<double>({2, 2, 1}, rng);
        EXPECT_LT(max_abs_diff(run_cmf(ps, b, t, w), oracle::cmf_forward(ps, b, t, w)), 1e-5);
    }
}

TEST(CrossModalityFusion, FreqQuerySourceSwapsStreams) {
    Rng rng(14), rng2(14);
    ParameterStore<double> ps, ps2;
    CrossModalityFusionBlock rgb(ps, "cmf", {2, 4, 2}, AttentionScale::paper, QuerySource::rgb, rng);
    CrossModalityFusionBlock freq(ps2, "cmf", {2, 4, 2}, AttentionScale::paper, QuerySource::freq, rng2);
    oracle::randomize(ps, rng);
    ps2.assign_from(ps);
    auto t = oracle::random_tensor<double>({2, 4, 2}, rng), w = oracle::random_tensor<double>({2, 4, 2}, rng);
    Graph<double> g(false);
    auto a = rgb.attention(g, ps, g.input(w), g.input(t)).value();
    auto b = freq.attention(g, ps2, g.input(t), g.input(w)).value();
    EXPECT_LT(max_abs_diff(a, b), 1e-12);
}

TEST(CrossModalityFusion, ShapeMismatchThrows) {
    Rng rng(15);
    ParameterStore<float> ps;
    CrossModalityFusionBlock b(ps, "cmf", {4, 4, 2}, AttentionScale::paper, QuerySource::rgb, rng);
    Graph<float> g;
    EXPECT_THROW(b.forward(g, ps, g.input(Tensor<float>({4, 4, 2})), g.input(Tensor<float>({2, 4, 2}))),
                 ShapeError);
}

TEST(CrossModalityFusion, AttentionStaysInValueHull) {
    Rng rng(16);
    ParameterStore<double> ps;
    CrossModalityFusionBlock b(ps, "cmf", {4, 4, 3}, AttentionScale::sqrt_dim, QuerySource::rgb, rng);
    oracle::randomize(ps, rng, -3, 3);
    auto t = oracle::random_tensor<double>({4, 4, 3}, rng), w = oracle::random_tensor<double>({4, 4, 3}, rng);
    Graph<double> g(false);
    auto wi = g.input(w);
    auto fused = b.attention(g, ps, g.input(t), wi).value();
    auto v = ops::conv2d(wi, ps.bind(g, b.value().weight), ps.bind(g, b.value().bias)).value();
    for (std::size_t ch = 0; ch < 3; ++ch) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t p = 0; p < 16; ++p) {
            lo = std::min(lo, v[p * 3 + ch]);
            hi = std::max(hi, v[p * 3 + ch]);
        }
        for (std::size_t p = 0; p < 16; ++p) {
            EXPECT_GE(fused[p * 3 + ch], lo - 1e-12);
            EXPECT_LE(fused[p * 3 + ch], hi + 1e-12);
        }
    }
}

class BlockGradcheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(BlockGradcheck, AllBlockParametersMatchFiniteDifferences) {
    const std::size_t side = GetParam();
    const GridShape grid{side, side, 2};
    Rng rng(20 + side);
    {
        ParameterStore<double> ps;
        MultiScaleTransformerBlock b(ps, "mst", grid, {side, side / 2, 2}, AttentionScale::paper, rng);
        oracle::randomize(ps, rng, -0.5, 0.5);
        auto r = gradcheck(ps, {oracle::random_tensor<double>(grid.shape(), rng)},
                           [&](auto& g, const auto& p, const auto& in) { return b.forward(g, p, in[0]); }, 1);
        EXPECT_LT(r.max_rel_error, 1e-4) << "mst " << r.worst;
    }
    {
        ParameterStore<double> ps;
        FrequencyFilterBlock b(ps, "ff", grid);
        oracle::randomize(ps, rng);
        auto r = gradcheck(ps, {oracle::random_tensor<double>(grid.shape(), rng)},
                           [&](auto& g, const auto& p, const auto& in) { return b.forward(g, p, in[0]); }, 2);
        EXPECT_LT(r.max_rel_error, 1e-4) << "ff " << r.worst;
    }
    for (auto source : {QuerySource::rgb, QuerySource::freq}) {
        ParameterStore<double> ps;
        CrossModalityFusionBlock b(ps, "cmf", grid, AttentionScale::paper, source, rng);
        oracle::randomize(ps, rng, -0.5, 0.5);
        auto r = gradcheck(ps, {oracle::random_tensor<double>(grid.shape(), rng), oracle::random_tensor<double>(grid.shape(), rng)},
                           [&](auto& g, const auto& p, const auto& in) { return b.forward(g, p, in[0], in[1]); }, 3);
        EXPECT_LT(r.max_rel_error, 1e-4) << "cmf " << r.worst;
    }
}

INSTANTIATE_TEST_SUITE_P(Grids, BlockGradcheck, ::testing::Values(4u, 8u));
