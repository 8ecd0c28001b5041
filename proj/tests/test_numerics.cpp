#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "m2tr/fft.hpp"
#include "m2tr/graph.hpp"
#include "m2tr/ops.hpp"
#include "m2tr/tns.hpp"
#include "oracles.hpp"

using namespace m2tr;

namespace {

Tensor<double> run_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                        std::size_t stride, std::size_t pad) {
    Graph<double> g;
    return ops::conv2d(g.input(x), g.input(w), g.input(b), stride, pad).value();
}

}  // namespace

TEST(Fft, ImpulseHasFlatSpectrum) {
    Tensor<float> x({4, 4, 1});
    x.at(0, 0, 0) = 1.0f;
    auto s = fft2d(x);
    for (std::size_t i = 0; i < s.re.size(); ++i) {
        EXPECT_NEAR(s.re[i], 1.0f, 1e-6);
        EXPECT_NEAR(s.im[i], 0.0f, 1e-6);
    }
}

TEST(Fft, ConstantImageIsDcOnly) {
    const float c = 0.37f;
    auto s = fft2d(Tensor<float>({4, 4, 1}, c));
    EXPECT_NEAR(s.re[0], 16 * c, 1e-5);
    for (std::size_t i = 1; i < s.re.size(); ++i) {
        EXPECT_NEAR(s.re[i], 0.0f, 1e-6);
        EXPECT_NEAR(s.im[i], 0.0f, 1e-6);
    }
}

TEST(Fft, MatchesDirectDft) {
    Rng rng(11);
    auto x = oracle::random_tensor<float>({4, 4, 1}, rng);
    auto s = fft2d(x);
    auto ref = oracle::dft2d(x);
    for (std::size_t i = 0; i < s.re.size(); ++i) {
        EXPECT_NEAR(s.re[i], ref.bins[i].real(), 1e-5);
        EXPECT_NEAR(s.im[i], ref.bins[i].imag(), 1e-5);
    }
}

TEST(Fft, NonPowerOfTwoFallsBackToDft) {
    Rng rng(12);
    auto x = oracle::random_tensor<double>({3, 5, 2}, rng);
    auto s = fft2d(x);
    auto ref = oracle::dft2d(x);
    for (std::size_t i = 0; i < s.re.size(); ++i) {
        EXPECT_NEAR(s.re[i], ref.bins[i].real(), 1e-10);
        EXPECT_NEAR(s.im[i], ref.bins[i].imag(), 1e-10);
    }
    EXPECT_LT(max_abs_diff(ifft2d(s), x), 1e-12);
}

TEST(Fft, RoundTrip) {
    Rng rng(13);
    auto x = oracle::random_tensor<float>({8, 8, 2}, rng);
    EXPECT_LT(max_abs_diff(ifft2d(fft2d(x)), x), 1e-5f);
}

TEST(Fft, ZeroSpectrumGivesZeroMap) {
    ComplexSpectrum<float> s{Tensor<float>({4, 8, 3}), Tensor<float>({4, 8, 3})};
    EXPECT_EQ(ifft2d(s).max_abs(), 0.0f);
}

TEST(Fft, InverseOfOracleSpectrum) {
    Rng rng(14);
    auto x = oracle::random_tensor<double>({8, 4, 3}, rng);
    auto ref = oracle::dft2d(x);
    ComplexSpectrum<double> s{Tensor<double>(x.shape()), Tensor<double>(x.shape())};
    for (std::size_t i = 0; i < ref.bins.size(); ++i) {
        s.re[i] = ref.bins[i].real();
        s.im[i] = ref.bins[i].imag();
    }
    EXPECT_LT(max_abs_diff(ifft2d(s), x), 1e-10);
}

TEST(Fft, RejectsWrongRank) {
    EXPECT_THROW(fft2d(Tensor<float>({4, 4})), ShapeError);
}

TEST(FftProperties, LinearityParsevalHermitian) {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t h = std::size_t{1} << (1 + rng.below(4));
        const std::size_t w = std::size_t{1} << (1 + rng.below(4));
        const std::size_t c = 1 + rng.below(4);
        auto x = oracle::random_tensor<float>({h, w, c}, rng);
        auto y = oracle::random_tensor<float>({h, w, c}, rng);
        const float a = static_cast<float>(rng.uniform(-2, 2)), b = static_cast<float>(rng.uniform(-2, 2));
        Tensor<float> mix(x.shape());
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
        auto sx = fft2d(x), sy = fft2d(y), sm = fft2d(mix);
        for (std::size_t i = 0; i < mix.size(); ++i) {
            EXPECT_NEAR(sm.re[i], a * sx.re[i] + b * sy.re[i], 1e-5 * (1 + std::abs(sm.re[i])));
            EXPECT_NEAR(sm.im[i], a * sx.im[i] + b * sy.im[i], 1e-5 * (1 + std::abs(sm.im[i])));
        }

        double energy = 0, spec = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            energy += double(x[i]) * x[i];
            spec += double(sx.re[i]) * sx.re[i] + double(sx.im[i]) * sx.im[i];
        }
        EXPECT_NEAR(energy, spec / double(h * w), 1e-4 * energy);

        for (std::size_t u = 0; u < h; ++u)
            for (std::size_t v = 0; v < w; ++v)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const float re = sx.re.at(u, v, ch), im = sx.im.at(u, v, ch);
                    const float re2 = sx.re.at((h - u) % h, (w - v) % w, ch);
                    const float im2 = sx.im.at((h - u) % h, (w - v) % w, ch);
                    const float scale = 1e-5f * (1.0f + std::hypot(re, im));
                    EXPECT_NEAR(re, re2, scale);
                    EXPECT_NEAR(im, -im2, scale);
                }
    }
}

TEST(Softmax, Analytic) {
    Tensor<double> m({3, 3});
    m.at(1, 0) = 0.0;
    m.at(1, 1) = std::log(3.0);
    m.at(1, 2) = -1e9;
    m.at(2, 0) = 1000;
    m.at(2, 1) = 1000;
    m.at(2, 2) = -1e9;
    auto s = ops::softmax_rows(m);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(s.at(0, j), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.at(1, 0), 0.25, 1e-12);
    EXPECT_NEAR(s.at(1, 1), 0.75, 1e-12);
    EXPECT_NEAR(s.at(2, 0), 0.5, 1e-12);
    EXPECT_NEAR(s.at(2, 1), 0.5, 1e-12);
    EXPECT_TRUE(s.all_finite());
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto m = oracle::random_tensor<float>({1 + rng.below(6), 1 + rng.below(9)}, rng, -20, 20);
        auto s = ops::softmax_rows(m);
        Tensor<float> shifted = m;
        const std::size_t cols = m.dim(1);
        for (std::size_t r = 0; r < m.dim(0); ++r) {
            const float c = static_cast<float>(rng.uniform(-50, 50));
            for (std::size_t j = 0; j < cols; ++j) shifted.at(r, j) += c;
        }
        auto s2 = ops::softmax_rows(shifted);
        for (std::size_t r = 0; r < m.dim(0); ++r) {
            double total = 0;
            for (std::size_t j = 0; j < cols; ++j) {
                EXPECT_GE(s.at(r, j), 0.0f);
                total += s.at(r, j);
            }
            EXPECT_NEAR(total, 1.0, 1e-6);
        }
        EXPECT_LT(max_abs_diff(s, s2), 1e-5f);
    }
}

TEST(Conv2d, IdentityKernel) {
    Rng rng(4);
    auto x = oracle::random_tensor<double>({5, 6, 3}, rng);
    Tensor<double> w({1, 1, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
    EXPECT_EQ(run_conv(x, w, Tensor<double>({3}), 1, 0), x);
}

TEST(Conv2d, AllOnesKernelOnConstantMap) {
    const double c = 0.7;
    const std::size_t cin = 4;
    auto out = run_conv(Tensor<double>({6, 6, cin}, c), Tensor<double>::ones({3, 3, cin, 2}), Tensor<double>({2}), 1, 1);
    EXPECT_EQ(out.shape(), (Shape{6, 6, 2}));
    EXPECT_NEAR(out.at(3, 3, 0), 9 * c * cin, 1e-12);
    EXPECT_NEAR(out.at(0, 0, 1), 4 * c * cin, 1e-12);  // corner sees a 2x2 window
}

TEST(Conv2d, MatchesLoopOracle) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 1 + 2 * rng.below(2), stride = 1 + rng.below(2), pad = rng.below(2);
        const std::size_t h = 4 + rng.below(6), w = 4 + rng.below(6), cin = 1 + rng.below(4), cout = 1 + rng.below(4);
        auto x = oracle::random_tensor<float>({h, w, cin}, rng);
        auto wt = oracle::random_tensor<float>({k, k, cin, cout}, rng);
        auto b = oracle::random_tensor<float>({cout}, rng);
        Graph<float> g;
        auto out = ops::conv2d(g.input(x), g.input(wt), g.input(b), stride, pad).value();
        auto ref = oracle::conv2d(x, wt, b, stride, pad);
        ASSERT_EQ(out.shape(), ref.shape());
        EXPECT_EQ(out.dim(0), (h + 2 * pad - k) / stride + 1);
        for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-5);
    }
}

TEST(Conv2d, ChannelMismatchIsShapeError) {
    Graph<float> g;
    EXPECT_THROW(ops::conv2d(g.input(Tensor<float>({4, 4, 3})), g.input(Tensor<float>({3, 3, 2, 4})),
                             g.input(Tensor<float>({4}))),
                 ShapeError);
}

TEST(Dense, IdentityZeroAndOracle) {
    Rng rng(6);
    auto x = oracle::random_tensor<double>({3, 4}, rng);
    Tensor<double> eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    {
        Graph<double> g;
        EXPECT_EQ(ops::dense(g.input(x), g.input(eye), g.input(Tensor<double>({4}))).value(), x);
    }
    {
        Graph<double> g;
        auto b = oracle::random_tensor<double>({5}, rng);
        auto out = ops::dense(g.input(x), g.input(Tensor<double>({4, 5})), g.input(b)).value();
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(out.at(r, c), b[c]);
    }
    {
        Graph<double> g;
        auto w = oracle::random_tensor<double>({4, 2}, rng);
        auto b = oracle::random_tensor<double>({2}, rng);
        auto out = ops::dense(g.input(x), g.input(w), g.input(b)).value();
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 2; ++c) {
                double acc = b[c];
                for (std::size_t k = 0; k < 4; ++k) acc += x.at(r, k) * w.at(k, c);
                EXPECT_NEAR(out.at(r, c), acc, 1e-12);
            }
    }
}

TEST(Upsample, ConstantStaysConstantAndFactorOneIsIdentity) {
    Rng rng(7);
    Graph<float> g;
    auto up = ops::upsample_bilinear(g.input(Tensor<float>({3, 5, 2}, 0.25f)), 4).value();
    EXPECT_EQ(up.shape(), (Shape{12, 20, 2}));
    for (float v : up.values()) EXPECT_FLOAT_EQ(v, 0.25f);
    auto x = oracle::random_tensor<float>({4, 3, 2}, rng);
    EXPECT_EQ(ops::upsample_bilinear(g.input(x), 1).value(), x);
}

TEST(Upsample, TwoByTwoHandComputed) {
    // source a b / c d; half-pixel centres put output pixel 1 at source coordinate 0.25
    Tensor<double> x({2, 2, 1}, std::vector<double>{1.0, 2.0, 3.0, 5.0});
    Graph<double> g;
    auto up = ops::upsample_bilinear(g.input(x), 2).value();
    const double w1[4][2] = {{1, 0}, {0.75, 0.25}, {0.25, 0.75}, {0, 1}};  // weights on index 0/1
    for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 4; ++ox) {
            const double expect = w1[oy][0] * (w1[ox][0] * 1.0 + w1[ox][1] * 2.0) +
                                  w1[oy][1] * (w1[ox][0] * 3.0 + w1[ox][1] * 5.0);
            EXPECT_NEAR(up.at(oy, ox, 0), expect, 1e-12) << oy << "," << ox;
        }
}

TEST(Patches, FoldInvertsExtract) {
    Rng rng(8);
    auto x = oracle::random_tensor<float>({8, 4, 3}, rng);
    auto t = ops::extract_patches(x, 2);
    EXPECT_EQ(t.shape(), (Shape{8, 12}));
    EXPECT_EQ(t.at(1, 0), x.at(0, 2, 0));  // second patch starts at column 2
    EXPECT_EQ(t.at(0, 3 * 3 + 1), x.at(1, 1, 1));
    EXPECT_EQ(ops::fold_patches(t, 8, 4, 3, 2), x);
    EXPECT_THROW(ops::extract_patches(x, 3), ShapeError);
}

TEST(Tns, RoundTripAndHeaderLayout) {
    Rng rng(9);
    auto x = oracle::random_tensor<float>({2, 3, 4}, rng);
    std::stringstream ss;
    tns::write(ss, x);
    const std::string bytes = ss.str();
    ASSERT_EQ(bytes.size(), 4 + 4 + 1 + 1 + 3 * 4 + x.size() * 4);
    EXPECT_EQ(bytes.substr(0, 4), "TNSR");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 1);   // f32
    EXPECT_EQ(bytes[9], 3);   // rank
    EXPECT_EQ(bytes[10], 2);  // dims LE
    EXPECT_EQ(bytes[14], 3);
    EXPECT_EQ(tns::read(ss), x);
}

TEST(Tns, RejectsCorruption) {
    std::stringstream bad("XXXX");
    EXPECT_THROW(tns::read(bad), DataError);
    std::stringstream ss;
    tns::write(ss, Tensor<float>({2, 2}, 1.0f));
    std::string s = ss.str();
    s[4] = 9;
    std::stringstream wrong_version(s);
    EXPECT_THROW(tns::read(wrong_version), DataError);
    std::stringstream truncated(ss.str().substr(0, 20));
    EXPECT_THROW(tns::read(truncated), DataError);
}
