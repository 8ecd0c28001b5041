#pragma once

// Test-only reference implementations written from the textbook definitions
// with explicit loops. They deliberately share no code with the library kernels.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "m2tr/rng.hpp"
#include "m2tr/tensor.hpp"

namespace oracle {

using m2tr::Tensor;

template <typename T>
Tensor<T> random_tensor(m2tr::Shape shape, m2tr::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

/// Direct O(n^2) 2D DFT per channel: S(u,v) = sum x(y,x) exp(-2πi(uy/H + vx/W)).
struct Spectrum {
    std::vector<std::complex<double>> bins;  // (H, W, C)
    std::size_t h, w, c;
    std::complex<double> at(std::size_t u, std::size_t v, std::size_t ch) const { return bins[(u * w + v) * c + ch]; }
};

template <typename T>
Spectrum dft2d(const Tensor<T>& x) {
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Spectrum s{std::vector<std::complex<double>>(h * w * c), h, w, c};
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t u = 0; u < h; ++u)
            for (std::size_t v = 0; v < w; ++v) {
                std::complex<double> acc{};
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const double ang = -2.0 * std::numbers::pi *
                                           (static_cast<double>(u * y) / h + static_cast<double>(v * xx) / w);
                        acc += static_cast<double>(x.at(y, xx, ch)) * std::polar(1.0, ang);
                    }
                s.bins[(u * w + v) * c + ch] = acc;
            }
    return s;
}

/// Real part of the direct inverse DFT.
inline Tensor<double> idft2d_real(const Spectrum& s) {
    Tensor<double> out({s.h, s.w, s.c});
    for (std::size_t ch = 0; ch < s.c; ++ch)
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) {
                std::complex<double> acc{};
                for (std::size_t u = 0; u < s.h; ++u)
                    for (std::size_t v = 0; v < s.w; ++v) {
                        const double ang = 2.0 * std::numbers::pi *
                                           (static_cast<double>(u * y) / s.h + static_cast<double>(v * x) / s.w);
                        acc += s.at(u, v, ch) * std::polar(1.0, ang);
                    }
                out.at(y, x, ch) = acc.real() / static_cast<double>(s.h * s.w);
            }
    return out;
}

/// Nested-loop cross-correlation; w is (k, k, Cin, Cout).
template <typename T>
Tensor<double> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                      std::size_t pad) {
    const long h = static_cast<long>(x.dim(0)), wd = static_cast<long>(x.dim(1));
    const std::size_t cin = x.dim(2), k = w.dim(0), cout = w.dim(3);
    const std::size_t ho = (x.dim(0) + 2 * pad - k) / stride + 1;
    const std::size_t wo = (x.dim(1) + 2 * pad - k) / stride + 1;
    Tensor<double> out({ho, wo, cout});
    for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox)
            for (std::size_t co = 0; co < cout; ++co) {
                double acc = b[co];
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                        const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                        if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci)
                            acc += static_cast<double>(x.at(iy, ix, ci)) *
                                   w[((ky * k + kx) * cin + ci) * cout + co];
                    }
                out.at(oy, ox, co) = acc;
            }
    return out;
}

/// softmax of a vector.
inline std::vector<double> softmax(const std::vector<double>& z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    std::vector<double> e(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - mx));
    for (auto& v : e) v /= s;
    return e;
}

/// Per-pixel channel map y = W^T x + b applied at one pixel; w is (1,1,C,C) conv weights.
template <typename T>
std::vector<double> embed_pixel(const T* px, const Tensor<T>& w, const Tensor<T>& b, std::size_t c) {
    std::vector<double> out(c);
    for (std::size_t o = 0; o < c; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < c; ++i) acc += static_cast<double>(px[i]) * w[i * c + o];
        out[o] = acc;
    }
    return out;
}

}  // namespace oracle

#include "m2tr/blocks.hpp"
#include "m2tr/params.hpp"

namespace oracle {

/// Overwrites every parameter (weights and biases) with uniform noise.
template <typename T>
void randomize(m2tr::ParameterStore<T>& ps, m2tr::Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (auto& v : ps.value(i).values()) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
Tensor<double> residual_block(const m2tr::ParameterStore<T>& ps, const m2tr::ResidualBlock& rb,
                              const Tensor<T>& x) {
    auto h = conv2d(x, ps.value(rb.conv_a.weight), ps.value(rb.conv_a.bias), 1, 1);
    for (auto& v : h.values()) v = std::max(v, 0.0);
    auto a = conv2d(h.template cast<T>(), ps.value(rb.conv_b.weight), ps.value(rb.conv_b.bias), 1, 1);
    auto s = conv2d(x, ps.value(rb.skip.weight), ps.value(rb.skip.bias), 1, 0);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s[i];
    return a;
}

/// Patch attention by explicit loops: materialize every flattened patch token of
/// the embedded maps, then A_p = sum_q softmax_q(<Q_p, K_q> / norm) V_q.
template <typename T>
Tensor<double> mst_forward(const m2tr::ParameterStore<T>& ps, const m2tr::MultiScaleTransformerBlock& blk,
                           const Tensor<T>& m, bool paper_scale = true) {
    const std::size_t h = m.dim(0), w = m.dim(1), c = m.dim(2);
    const auto& heads = blk.heads();
    Tensor<double> cat({h, w, c * heads.size()});
    for (std::size_t hd = 0; hd < heads.size(); ++hd) {
        const auto& head = heads[hd];
        const std::size_t r = head.patch, pw = w / r, n = (h / r) * pw, width = r * r * c;
        std::vector<std::vector<double>> q(n, std::vector<double>(width)), k = q, v = q;
        for (std::size_t p = 0; p < n; ++p) {
            const std::size_t py = p / pw, px = p % pw;
            for (std::size_t dy = 0; dy < r; ++dy)
                for (std::size_t dx = 0; dx < r; ++dx) {
                    const T* pix = &m.at(py * r + dy, px * r + dx, 0);
                    auto eq = embed_pixel(pix, ps.value(head.query.weight), ps.value(head.query.bias), c);
                    auto ek = embed_pixel(pix, ps.value(head.key.weight), ps.value(head.key.bias), c);
                    auto ev = embed_pixel(pix, ps.value(head.value.weight), ps.value(head.value.bias), c);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t j = (dy * r + dx) * c + ch;
                        q[p][j] = eq[ch];
                        k[p][j] = ek[ch];
                        v[p][j] = ev[ch];
                    }
                }
        }
        const double norm = paper_scale ? double(width) : std::sqrt(double(width));
        for (std::size_t p = 0; p < n; ++p) {
            std::vector<double> z(n);
            for (std::size_t o = 0; o < n; ++o) {
                double dot = 0;
                for (std::size_t j = 0; j < width; ++j) dot += q[p][j] * k[o][j];
                z[o] = dot / norm;
            }
            auto s = softmax(z);
            const std::size_t py = p / pw, px = p % pw;
            for (std::size_t j = 0; j < width; ++j) {
                double acc = 0;
                for (std::size_t o = 0; o < n; ++o) acc += s[o] * v[o][j];
                const std::size_t dy = j / (r * c), dx = (j / c) % r, ch = j % c;
                cat.at(py * r + dy, px * r + dx, hd * c + ch) = acc;
            }
        }
    }
    return residual_block(ps, blk.merge(), cat.template cast<T>());
}

/// Fusion attention by explicit loops; query from `t`, keys/values from `w`.
template <typename T>
Tensor<double> cmf_forward(const m2tr::ParameterStore<T>& ps, const m2tr::CrossModalityFusionBlock& blk,
                           const Tensor<T>& t, const Tensor<T>& w) {
    const std::size_t h = t.dim(0), wd = t.dim(1), c = t.dim(2), n = h * wd;
    std::vector<std::vector<double>> q(n), k(n), v(n);
    for (std::size_t p = 0; p < n; ++p) {
        q[p] = embed_pixel(t.data() + p * c, ps.value(blk.query().weight), ps.value(blk.query().bias), c);
        k[p] = embed_pixel(w.data() + p * c, ps.value(blk.key().weight), ps.value(blk.key().bias), c);
        v[p] = embed_pixel(w.data() + p * c, ps.value(blk.value().weight), ps.value(blk.value().bias), c);
    }
    const double norm = std::sqrt(double(h * wd * c));
    Tensor<T> fused({h, wd, c});
    for (std::size_t p = 0; p < n; ++p) {
        std::vector<double> z(n);
        for (std::size_t o = 0; o < n; ++o) {
            double dot = 0;
            for (std::size_t ch = 0; ch < c; ++ch) dot += q[p][ch] * k[o][ch];
            z[o] = dot / norm;
        }
        auto s = softmax(z);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0;
            for (std::size_t o = 0; o < n; ++o) acc += s[o] * v[o][ch];
            fused[p * c + ch] = static_cast<T>(acc + t[p * c + ch]);
        }
    }
    return conv2d(fused, ps.value(blk.out().weight), ps.value(blk.out().bias), 1, 1);
}

}  // namespace oracle
