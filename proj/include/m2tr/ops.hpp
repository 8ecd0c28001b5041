#pragma once

// Differentiable primitives recorded on a Graph. Feature maps are (H, W, C)
// row-major; matrices are (rows, cols). Apart from bias addition nothing
// broadcasts: mismatched shapes throw ShapeError.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "m2tr/errors.hpp"
#include "m2tr/fft.hpp"
#include "m2tr/graph.hpp"
#include "m2tr/tensor.hpp"

namespace m2tr::ops {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

namespace detail {

template <typename T>
void same_shape(Var<T> a, Var<T> b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename T>
CMapRM<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
    return CMapRM<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MapRM<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
    return MapRM<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

struct ConvGeometry {
    std::size_t h, w, cin, k, cout, stride, pad, ho, wo;
};

/// Unfolds (H, W, Cin) into (Ho*Wo, k*k*Cin) with zero padding; column order (dy, dx, c).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
    const std::size_t kk = g.k * g.k * g.cin;
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
            T* row = cols + (oy * g.wo + ox) * kk;
            for (std::size_t dy = 0; dy < g.k; ++dy) {
                const long iy = static_cast<long>(oy * g.stride + dy) - static_cast<long>(g.pad);
                for (std::size_t dx = 0; dx < g.k; ++dx) {
                    const long ix = static_cast<long>(ox * g.stride + dx) - static_cast<long>(g.pad);
                    T* dst = row + (dy * g.k + dx) * g.cin;
                    if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w)) {
                        std::fill(dst, dst + g.cin, T{0});
                    } else {
                        const T* src = x + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
                        std::copy(src, src + g.cin, dst);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx_out) {
    const std::size_t kk = g.k * g.k * g.cin;
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const T* row = cols + (oy * g.wo + ox) * kk;
            for (std::size_t dy = 0; dy < g.k; ++dy) {
                const long iy = static_cast<long>(oy * g.stride + dy) - static_cast<long>(g.pad);
                if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                for (std::size_t dx = 0; dx < g.k; ++dx) {
                    const long ix = static_cast<long>(ox * g.stride + dx) - static_cast<long>(g.pad);
                    if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                    const T* src = row + (dy * g.k + dx) * g.cin;
                    T* dst = dx_out + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
                    for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::same_shape(a, b, "add");
    Tensor<T> out = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.graph->record(std::move(out), [ia = a.id, ib = b.id](Graph<T>& g, const Tensor<T>& dy) {
        g.accumulate(ia, dy);
        g.accumulate(ib, dy);
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::same_shape(a, b, "sub");
    Tensor<T> out = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return a.graph->record(std::move(out), [ia = a.id, ib = b.id](Graph<T>& g, const Tensor<T>& dy) {
        g.accumulate(ia, dy);
        Tensor<T> neg = dy;
        for (auto& v : neg.values()) v = -v;
        g.accumulate(ib, std::move(neg));
    });
}

/// Hadamard product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::same_shape(a, b, "mul");
    Tensor<T> out = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.graph->record(std::move(out), [ia = a.id, ib = b.id](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& av = g.value(ia);
        const Tensor<T>& bv = g.value(ib);
        Tensor<T> da = dy, db = dy;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            da[i] *= bv[i];
            db[i] *= av[i];
        }
        g.accumulate(ia, std::move(da));
        g.accumulate(ib, std::move(db));
    });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v *= s;
    return a.graph->record(std::move(out), [ia = a.id, s](Graph<T>& g, const Tensor<T>& dy) {
        Tensor<T> da = dy;
        for (auto& v : da.values()) v *= s;
        g.accumulate(ia, std::move(da));
    });
}

template <typename T>
Var<T> relu(Var<T> a) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    return a.graph->record(std::move(out), [ia = a.id](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& av = g.value(ia);
        Tensor<T> da = dy;
        for (std::size_t i = 0; i < da.size(); ++i)
            if (!(av[i] > T{0})) da[i] = T{0};
        g.accumulate(ia, std::move(da));
    });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = T{1} / (T{1} + std::exp(-v));
    const std::size_t out_id = a.graph->size();
    return a.graph->record(std::move(out), [ia = a.id, out_id](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& y = g.value(out_id);
        Tensor<T> da = dy;
        for (std::size_t i = 0; i < da.size(); ++i) da[i] *= y[i] * (T{1} - y[i]);
        g.accumulate(ia, std::move(da));
    });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    Tensor<T> out = a.value().reshaped(shape);
    return a.graph->record(std::move(out), [ia = a.id](Graph<T>& g, const Tensor<T>& dy) {
        g.accumulate(ia, dy.reshaped(g.value(ia).shape()));
    });
}

/// Sum of all entries, shape {1}.
template <typename T>
Var<T> sum(Var<T> a) {
    Tensor<T> out({1}, a.value().sum());
    return a.graph->record(std::move(out), [ia = a.id](Graph<T>& g, const Tensor<T>& dy) {
        g.accumulate(ia, Tensor<T>(g.value(ia).shape(), dy[0]));
    });
}

/// sum(a ⊙ w) for a constant weight tensor; shape {1}.
template <typename T>
Var<T> weighted_sum(Var<T> a, const Tensor<T>& w) {
    require_shape(w, a.shape(), "weighted_sum");
    T acc{0};
    const Tensor<T>& av = a.value();
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * w[i];
    return a.graph->record(Tensor<T>({1}, acc), [ia = a.id, w](Graph<T>& g, const Tensor<T>& dy) {
        Tensor<T> da = w;
        for (auto& v : da.values()) v *= dy[0];
        g.accumulate(ia, std::move(da));
    });
}

/// Linear combination of scalar ({1}-shaped) vars with constant coefficients.
template <typename T>
Var<T> linear_combination(const std::vector<Var<T>>& terms, const std::vector<T>& coeffs) {
    if (terms.empty() || terms.size() != coeffs.size())
        throw ShapeError("linear_combination: term/coefficient count mismatch");
    T acc{0};
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].value().size() != 1) throw ShapeError("linear_combination: terms must be scalars");
        acc += coeffs[i] * terms[i].value()[0];
        ids.push_back(terms[i].id);
    }
    return terms[0].graph->record(Tensor<T>({1}, acc), [ids, coeffs](Graph<T>& g, const Tensor<T>& dy) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            g.accumulate(ids[i], Tensor<T>(g.value(ids[i]).shape(), coeffs[i] * dy[0]));
    });
}

// ---------------------------------------------------------------------------
// matrix kernels

/// (m, k) x (k, n), or (m, k) x (n, k)^T when transpose_b.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b = false) {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    require_rank(av, 2, "matmul lhs");
    require_rank(bv, 2, "matmul rhs");
    const std::size_t m = av.dim(0), k = av.dim(1);
    const std::size_t bk = transpose_b ? bv.dim(1) : bv.dim(0);
    const std::size_t n = transpose_b ? bv.dim(0) : bv.dim(1);
    if (bk != k)
        throw ShapeError("matmul: inner dimensions differ " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()) + (transpose_b ? "^T" : ""));
    Tensor<T> out({m, n});
    auto A = detail::as_matrix(av, m, k);
    auto O = detail::as_matrix(out, m, n);
    if (transpose_b)
        O.noalias() = A * detail::as_matrix(bv, n, k).transpose();
    else
        O.noalias() = A * detail::as_matrix(bv, k, n);
    return a.graph->record(std::move(out), [ia = a.id, ib = b.id, m, k, n, transpose_b](
                                               Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& av = g.value(ia);
        const Tensor<T>& bv = g.value(ib);
        auto dY = detail::as_matrix(dy, m, n);
        Tensor<T> da({m, k});
        Tensor<T> db(bv.shape());
        auto A = detail::as_matrix(av, m, k);
        if (transpose_b) {
            auto B = detail::as_matrix(bv, n, k);
            detail::as_matrix(da, m, k).noalias() = dY * B;
            detail::as_matrix(db, n, k).noalias() = dY.transpose() * A;
        } else {
            auto B = detail::as_matrix(bv, k, n);
            detail::as_matrix(da, m, k).noalias() = dY * B.transpose();
            detail::as_matrix(db, k, n).noalias() = A.transpose() * dY;
        }
        g.accumulate(ia, std::move(da));
        g.accumulate(ib, std::move(db));
    });
}

/// Fully connected layer: x (n, in) · w (in, out) + b (out).
template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    const Tensor<T>& bv = b.value();
    require_rank(xv, 2, "dense input");
    require_rank(wv, 2, "dense weights");
    const std::size_t n = xv.dim(0), in = xv.dim(1), outw = wv.dim(1);
    if (wv.dim(0) != in)
        throw ShapeError("dense: input width " + std::to_string(in) + " vs weights " + shape_str(wv.shape()));
    require_shape(bv, Shape{outw}, "dense bias");
    Tensor<T> out({n, outw});
    auto O = detail::as_matrix(out, n, outw);
    O.noalias() = detail::as_matrix(xv, n, in) * detail::as_matrix(wv, in, outw);
    O.rowwise() += detail::as_matrix(bv, 1, outw).row(0);
    return x.graph->record(std::move(out), [ix = x.id, iw = w.id, ib = b.id, n, in, outw](
                                               Graph<T>& g, const Tensor<T>& dy) {
        auto dY = detail::as_matrix(dy, n, outw);
        Tensor<T> dx({n, in}), dw({in, outw}), db({outw});
        detail::as_matrix(dx, n, in).noalias() = dY * detail::as_matrix(g.value(iw), in, outw).transpose();
        detail::as_matrix(dw, in, outw).noalias() = detail::as_matrix(g.value(ix), n, in).transpose() * dY;
        detail::as_matrix(db, 1, outw).noalias() = dY.colwise().sum();
        g.accumulate(ix, std::move(dx));
        g.accumulate(iw, std::move(dw));
        g.accumulate(ib, std::move(db));
    });
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& m) {
    require_rank(m, 2, "softmax_rows");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    Tensor<T> out(m.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = m.data() + r * cols;
        T* o = out.data() + r * cols;
        const T mx = *std::max_element(in, in + cols);
        T total{0};
        for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
        for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
    }
    return out;
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
    Tensor<T> out = softmax_rows(a.value());
    const std::size_t out_id = a.graph->size();
    return a.graph->record(std::move(out), [ia = a.id, out_id](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& y = g.value(out_id);
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        Tensor<T> da(y.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yr = y.data() + r * cols;
            const T* gr = dy.data() + r * cols;
            T dot{0};
            for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
            T* d = da.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) d[c] = yr[c] * (gr[c] - dot);
        }
        g.accumulate(ia, std::move(da));
    });
}

// ---------------------------------------------------------------------------
// spatial kernels

/// Cross-correlation of x (H, W, Cin) with w (k, k, Cin, Cout) plus bias (Cout).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride = 1, std::size_t padding = 0) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    require_rank(xv, 3, "conv2d input");
    require_rank(wv, 4, "conv2d weights");
    if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
    if (wv.dim(0) != wv.dim(1)) throw ShapeError("conv2d: kernel must be square");
    if (wv.dim(2) != xv.dim(2))
        throw ShapeError("conv2d: input has " + std::to_string(xv.dim(2)) + " channels, weights expect " +
                         std::to_string(wv.dim(2)));
    require_shape(b.value(), Shape{wv.dim(3)}, "conv2d bias");
    detail::ConvGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(0), wv.dim(3), stride, padding, 0, 0};
    if (geo.h + 2 * padding < geo.k || geo.w + 2 * padding < geo.k)
        throw ShapeError("conv2d: kernel larger than padded input");
    geo.ho = (geo.h + 2 * padding - geo.k) / stride + 1;
    geo.wo = (geo.w + 2 * padding - geo.k) / stride + 1;
    const std::size_t kk = geo.k * geo.k * geo.cin;
    const std::size_t npix = geo.ho * geo.wo;
    const bool pointwise = geo.k == 1 && stride == 1 && padding == 0;

    Tensor<T> out({geo.ho, geo.wo, geo.cout});
    auto O = detail::as_matrix(out, npix, geo.cout);
    auto W = detail::as_matrix(wv, kk, geo.cout);
    if (pointwise) {
        O.noalias() = detail::as_matrix(xv, npix, kk) * W;
    } else {
        std::vector<T> cols(npix * kk);
        detail::im2col(xv.data(), geo, cols.data());
        O.noalias() = CMapRM<T>(cols.data(), static_cast<Eigen::Index>(npix), static_cast<Eigen::Index>(kk)) * W;
    }
    O.rowwise() += detail::as_matrix(b.value(), 1, geo.cout).row(0);

    return x.graph->record(std::move(out), [ix = x.id, iw = w.id, ib = b.id, geo, kk, npix, pointwise](
                                               Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& xv = g.value(ix);
        const Tensor<T>& wv = g.value(iw);
        auto dY = detail::as_matrix(dy, npix, geo.cout);
        auto W = detail::as_matrix(wv, kk, geo.cout);
        Tensor<T> dw(wv.shape()), db({geo.cout});
        detail::as_matrix(db, 1, geo.cout).noalias() = dY.colwise().sum();
        Tensor<T> dx(xv.shape());
        if (pointwise) {
            detail::as_matrix(dw, kk, geo.cout).noalias() = detail::as_matrix(xv, npix, kk).transpose() * dY;
            detail::as_matrix(dx, npix, kk).noalias() = dY * W.transpose();
        } else {
            std::vector<T> cols(npix * kk);
            detail::im2col(xv.data(), geo, cols.data());
            MapRM<T> C(cols.data(), static_cast<Eigen::Index>(npix), static_cast<Eigen::Index>(kk));
            detail::as_matrix(dw, kk, geo.cout).noalias() = C.transpose() * dY;
            C.noalias() = dY * W.transpose();
            detail::col2im_add(cols.data(), geo, dx.data());
        }
        g.accumulate(ix, std::move(dx));
        g.accumulate(iw, std::move(dw));
        g.accumulate(ib, std::move(db));
    });
}

namespace detail {

struct BilinearTap {
    std::size_t i0, i1;
    double f;  // weight of i1
};

/// Half-pixel-centre source coordinates clamped to the edges.
inline std::vector<BilinearTap> bilinear_taps(std::size_t in, std::size_t factor) {
    std::vector<BilinearTap> taps(in * factor);
    for (std::size_t o = 0; o < taps.size(); ++o) {
        double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(src));
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

}  // namespace detail

/// Bilinear upsampling of (H, W, C) by an integer factor.
template <typename T>
Var<T> upsample_bilinear(Var<T> x, std::size_t factor) {
    const Tensor<T>& xv = x.value();
    require_rank(xv, 3, "upsample_bilinear");
    if (factor == 0) throw ConfigError("upsample_bilinear: factor must be >= 1");
    const std::size_t h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    const auto ty = detail::bilinear_taps(h, factor);
    const auto tx = detail::bilinear_taps(w, factor);
    Tensor<T> out({h * factor, w * factor, c});
    for (std::size_t oy = 0; oy < ty.size(); ++oy) {
        const auto& a = ty[oy];
        for (std::size_t ox = 0; ox < tx.size(); ++ox) {
            const auto& bx = tx[ox];
            const T w00 = static_cast<T>((1 - a.f) * (1 - bx.f)), w01 = static_cast<T>((1 - a.f) * bx.f);
            const T w10 = static_cast<T>(a.f * (1 - bx.f)), w11 = static_cast<T>(a.f * bx.f);
            const T* p00 = &xv.at(a.i0, bx.i0, 0);
            const T* p01 = &xv.at(a.i0, bx.i1, 0);
            const T* p10 = &xv.at(a.i1, bx.i0, 0);
            const T* p11 = &xv.at(a.i1, bx.i1, 0);
            T* o = &out.at(oy, ox, 0);
            for (std::size_t ch = 0; ch < c; ++ch)
                o[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
        }
    }
    return x.graph->record(std::move(out), [ix = x.id, ty, tx, c](Graph<T>& g, const Tensor<T>& dy) {
        Tensor<T> dx(g.value(ix).shape());
        for (std::size_t oy = 0; oy < ty.size(); ++oy) {
            const auto& a = ty[oy];
            for (std::size_t ox = 0; ox < tx.size(); ++ox) {
                const auto& bx = tx[ox];
                const T w00 = static_cast<T>((1 - a.f) * (1 - bx.f)), w01 = static_cast<T>((1 - a.f) * bx.f);
                const T w10 = static_cast<T>(a.f * (1 - bx.f)), w11 = static_cast<T>(a.f * bx.f);
                const T* gy = &dy.at(oy, ox, 0);
                T* p00 = &dx.at(a.i0, bx.i0, 0);
                T* p01 = &dx.at(a.i0, bx.i1, 0);
                T* p10 = &dx.at(a.i1, bx.i0, 0);
                T* p11 = &dx.at(a.i1, bx.i1, 0);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    p00[ch] += w00 * gy[ch];
                    p01[ch] += w01 * gy[ch];
                    p10[ch] += w10 * gy[ch];
                    p11[ch] += w11 * gy[ch];
                }
            }
        }
        g.accumulate(ix, std::move(dx));
    });
}

/// (H, W, C) -> (N, r*r*C): non-overlapping r x r patches in raster order, each
/// flattened as (dy, dx, c).
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& x, std::size_t r) {
    require_rank(x, 3, "extract_patches");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (r == 0 || h % r || w % r)
        throw ShapeError("extract_patches: patch side " + std::to_string(r) + " does not divide " +
                         shape_str(x.shape()));
    const std::size_t ph = h / r, pw = w / r, width = r * r * c;
    Tensor<T> out({ph * pw, width});
    for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px) {
            T* dst = out.data() + (py * pw + px) * width;
            for (std::size_t dy = 0; dy < r; ++dy) {
                const T* src = &x.at(py * r + dy, px * r, 0);
                std::copy(src, src + r * c, dst + dy * r * c);
            }
        }
    return out;
}

/// Inverse of extract_patches.
template <typename T>
Tensor<T> fold_patches(const Tensor<T>& tokens, std::size_t h, std::size_t w, std::size_t c, std::size_t r) {
    require_shape(tokens, Shape{(h / r) * (w / r), r * r * c}, "fold_patches");
    const std::size_t pw = w / r, width = r * r * c;
    Tensor<T> out({h, w, c});
    for (std::size_t t = 0; t < tokens.dim(0); ++t) {
        const std::size_t py = t / pw, px = t % pw;
        const T* src = tokens.data() + t * width;
        for (std::size_t dy = 0; dy < r; ++dy) std::copy(src + dy * r * c, src + (dy + 1) * r * c, &out.at(py * r + dy, px * r, 0));
    }
    return out;
}

template <typename T>
Var<T> extract_patches(Var<T> x, std::size_t r) {
    Tensor<T> out = extract_patches(x.value(), r);
    const Shape s = x.shape();
    return x.graph->record(std::move(out), [ix = x.id, s, r](Graph<T>& g, const Tensor<T>& dy) {
        g.accumulate(ix, fold_patches(dy, s[0], s[1], s[2], r));
    });
}

template <typename T>
Var<T> fold_patches(Var<T> tokens, std::size_t h, std::size_t w, std::size_t c, std::size_t r) {
    Tensor<T> out = fold_patches(tokens.value(), h, w, c, r);
    return tokens.graph->record(std::move(out), [it = tokens.id, r](Graph<T>& g, const Tensor<T>& dy) {
        g.accumulate(it, extract_patches(dy, r));
    });
}

/// Concatenates (H, W, C_i) maps along channels.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape s0 = parts[0].shape();
    if (s0.size() != 3) throw ShapeError("concat_channels: inputs must be rank 3");
    std::vector<std::size_t> widths, ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != 3 || s[0] != s0[0] || s[1] != s0[1])
            throw ShapeError("concat_channels: spatial shape mismatch");
        widths.push_back(s[2]);
        ids.push_back(p.id);
        total += s[2];
    }
    const std::size_t npix = s0[0] * s0[1];
    Tensor<T> out({s0[0], s0[1], total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor<T>& v = parts[k].value();
        for (std::size_t p = 0; p < npix; ++p)
            std::copy(v.data() + p * widths[k], v.data() + (p + 1) * widths[k], out.data() + p * total + off);
        off += widths[k];
    }
    return parts[0].graph->record(std::move(out), [ids, widths, total, npix](Graph<T>& g, const Tensor<T>& dy) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            Tensor<T> d(g.value(ids[k]).shape());
            for (std::size_t p = 0; p < npix; ++p)
                std::copy(dy.data() + p * total + off, dy.data() + p * total + off + widths[k], d.data() + p * widths[k]);
            off += widths[k];
            g.accumulate(ids[k], std::move(d));
        }
    });
}

/// Mean over rows: (n, d) -> (1, d). Global average pooling is this on (H*W, C).
template <typename T>
Var<T> mean_rows(Var<T> x) {
    const Tensor<T>& xv = x.value();
    require_rank(xv, 2, "mean_rows");
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    Tensor<T> out({1, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out[c] += xv[r * d + c];
    for (auto& v : out.values()) v /= static_cast<T>(n);
    return x.graph->record(std::move(out), [ix = x.id, n, d](Graph<T>& g, const Tensor<T>& dy) {
        Tensor<T> dx({n, d});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) dx[r * d + c] = dy[c] / static_cast<T>(n);
        g.accumulate(ix, std::move(dx));
    });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
    require_rank(x.value(), 3, "global_avg_pool");
    const Shape& s = x.shape();
    return mean_rows(reshape(x, Shape{s[0] * s[1], s[2]}));
}

/// Stacks (1, d) or (d) rows into (n, d).
template <typename T>
Var<T> stack_rows(const std::vector<Var<T>>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    const std::size_t d = rows[0].value().size();
    std::vector<std::size_t> ids;
    Tensor<T> out({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Tensor<T>& v = rows[r].value();
        if (v.size() != d) throw ShapeError("stack_rows: row width mismatch");
        std::copy(v.data(), v.data() + d, out.data() + r * d);
        ids.push_back(rows[r].id);
    }
    return rows[0].graph->record(std::move(out), [ids, d](Graph<T>& g, const Tensor<T>& dy) {
        for (std::size_t r = 0; r < ids.size(); ++r) {
            std::vector<T> part(dy.data() + r * d, dy.data() + (r + 1) * d);
            g.accumulate(ids[r], Tensor<T>(g.value(ids[r]).shape(), std::move(part)));
        }
    });
}

/// Columns [start, start + len) of a (n, d) matrix.
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t len) {
    const Tensor<T>& xv = x.value();
    require_rank(xv, 2, "slice_cols");
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    if (len == 0 || start + len > d) throw ShapeError("slice_cols: range outside " + shape_str(xv.shape()));
    Tensor<T> out({n, len});
    for (std::size_t r = 0; r < n; ++r)
        std::copy(xv.data() + r * d + start, xv.data() + r * d + start + len, out.data() + r * len);
    return x.graph->record(std::move(out), [ix = x.id, start, len, n, d](Graph<T>& g, const Tensor<T>& dy) {
        Tensor<T> dx({n, d});
        for (std::size_t r = 0; r < n; ++r)
            std::copy(dy.data() + r * len, dy.data() + (r + 1) * len, dx.data() + r * d + start);
        g.accumulate(ix, std::move(dx));
    });
}

/// Concatenates (n, d_i) matrices along columns.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    std::vector<Var<T>> as_maps;
    for (const auto& p : parts) {
        require_rank(p.value(), 2, "concat_cols");
        as_maps.push_back(reshape(p, Shape{p.shape()[0], 1, p.shape()[1]}));
    }
    Var<T> cat = concat_channels(as_maps);
    return reshape(cat, Shape{cat.shape()[0], cat.shape()[2]});
}

/// Row-wise layer normalization with learned gain and shift (d).
template <typename T>
Var<T> layer_norm_rows(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    const Tensor<T>& xv = x.value();
    require_rank(xv, 2, "layer_norm_rows");
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    require_shape(gamma.value(), Shape{d}, "layer_norm gamma");
    require_shape(beta.value(), Shape{d}, "layer_norm beta");
    Tensor<T> xhat({n, d});
    std::vector<T> inv_std(n);
    Tensor<T> out({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const T* xr = xv.data() + r * d;
        T mean{0}, var{0};
        for (std::size_t c = 0; c < d; ++c) mean += xr[c];
        mean /= static_cast<T>(d);
        for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<T>(d);
        inv_std[r] = T{1} / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat[r * d + c] = (xr[c] - mean) * inv_std[r];
            out[r * d + c] = xhat[r * d + c] * gamma.value()[c] + beta.value()[c];
        }
    }
    return x.graph->record(std::move(out), [ix = x.id, ig = gamma.id, ib = beta.id, xhat = std::move(xhat),
                                            inv_std = std::move(inv_std), n, d](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& gm = g.value(ig);
        Tensor<T> dx({n, d}), dg({d}), db({d});
        for (std::size_t r = 0; r < n; ++r) {
            T s1{0}, s2{0};
            for (std::size_t c = 0; c < d; ++c) {
                const T gh = dy[r * d + c] * gm[c];
                s1 += gh;
                s2 += gh * xhat[r * d + c];
                dg[c] += dy[r * d + c] * xhat[r * d + c];
                db[c] += dy[r * d + c];
            }
            for (std::size_t c = 0; c < d; ++c) {
                const T gh = dy[r * d + c] * gm[c];
                dx[r * d + c] = inv_std[r] / static_cast<T>(d) *
                                (static_cast<T>(d) * gh - s1 - xhat[r * d + c] * s2);
            }
        }
        g.accumulate(ix, std::move(dx));
        g.accumulate(ig, std::move(dg));
        g.accumulate(ib, std::move(db));
    });
}

// ---------------------------------------------------------------------------
// spectral kernels. A spectrum var has shape (H, W, C, 2), last axis (re, im).

namespace detail {

template <typename T>
Tensor<T> pack_spectrum(const ComplexSpectrum<T>& s) {
    const Shape& sh = s.re.shape();
    Tensor<T> out({sh[0], sh[1], sh[2], 2});
    for (std::size_t i = 0; i < s.re.size(); ++i) {
        out[2 * i] = s.re[i];
        out[2 * i + 1] = s.im[i];
    }
    return out;
}

template <typename T>
ComplexSpectrum<T> unpack_spectrum(const Tensor<T>& t) {
    const Shape sh{t.dim(0), t.dim(1), t.dim(2)};
    ComplexSpectrum<T> s{Tensor<T>(sh), Tensor<T>(sh)};
    for (std::size_t i = 0; i < s.re.size(); ++i) {
        s.re[i] = t[2 * i];
        s.im[i] = t[2 * i + 1];
    }
    return s;
}

}  // namespace detail

template <typename T>
Var<T> fft2d(Var<T> x) {
    Tensor<T> out = detail::pack_spectrum(fft2d(x.value()));
    return x.graph->record(std::move(out), [ix = x.id](Graph<T>& g, const Tensor<T>& dy) {
        // x real, y = F x  =>  dx = Re(F^H dy) = H*W * Re(ifft(dy))
        const Tensor<T>& xv = g.value(ix);
        Tensor<T> dx = ifft2d(detail::unpack_spectrum(dy));
        const T n = static_cast<T>(xv.dim(0) * xv.dim(1));
        for (auto& v : dx.values()) v *= n;
        g.accumulate(ix, std::move(dx));
    });
}

/// Multiplies real and imaginary planes of a packed spectrum by a real filter (H, W, C).
template <typename T>
Var<T> spectral_filter(Var<T> spec, Var<T> filter) {
    const Tensor<T>& sv = spec.value();
    const Tensor<T>& fv = filter.value();
    require_rank(sv, 4, "spectral_filter spectrum");
    require_shape(fv, Shape{sv.dim(0), sv.dim(1), sv.dim(2)}, "spectral_filter filter");
    Tensor<T> out = sv;
    for (std::size_t i = 0; i < fv.size(); ++i) {
        out[2 * i] *= fv[i];
        out[2 * i + 1] *= fv[i];
    }
    return spec.graph->record(std::move(out), [is = spec.id, ifl = filter.id](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& sv = g.value(is);
        const Tensor<T>& fv = g.value(ifl);
        Tensor<T> ds = dy;
        Tensor<T> df(fv.shape());
        for (std::size_t i = 0; i < fv.size(); ++i) {
            ds[2 * i] *= fv[i];
            ds[2 * i + 1] *= fv[i];
            df[i] = dy[2 * i] * sv[2 * i] + dy[2 * i + 1] * sv[2 * i + 1];
        }
        g.accumulate(is, std::move(ds));
        g.accumulate(ifl, std::move(df));
    });
}

/// Real part of the inverse transform of a packed spectrum.
template <typename T>
Var<T> ifft2d_real(Var<T> spec) {
    require_rank(spec.value(), 4, "ifft2d_real");
    Tensor<T> out = ifft2d(detail::unpack_spectrum(spec.value()));
    return spec.graph->record(std::move(out), [is = spec.id](Graph<T>& g, const Tensor<T>& dy) {
        // y = Re(F^-1 s)  =>  ds = conj-free forward transform of dy scaled by 1/(H*W)
        ComplexSpectrum<T> f = fft2d(dy);
        const T n = static_cast<T>(dy.dim(0) * dy.dim(1));
        for (std::size_t i = 0; i < f.re.size(); ++i) {
            f.re[i] /= n;
            f.im[i] /= n;
        }
        g.accumulate(is, detail::pack_spectrum(f));
    });
}

}  // namespace m2tr::ops
