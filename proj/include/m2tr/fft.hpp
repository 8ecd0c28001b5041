#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "m2tr/errors.hpp"
#include "m2tr/tensor.hpp"

namespace m2tr {

/// Per-channel 2D spectrum of an (H, W, C) map, stored as separate real and imaginary planes.
template <typename T>
struct ComplexSpectrum {
    Tensor<T> re;
    Tensor<T> im;

    const Shape& shape() const { return re.shape(); }
};

namespace kernel_stats {

inline std::atomic<std::size_t>& fft_calls() {
    static std::atomic<std::size_t> counter{0};
    return counter;
}

}  // namespace kernel_stats

namespace fft_detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

/// In-place 1D transform with stride. sign = -1 forward, +1 inverse (unnormalized).
template <typename T>
void transform_1d(std::complex<T>* x, std::size_t n, std::size_t stride, int sign,
                  std::vector<std::complex<T>>& scratch) {
    if (n == 1) return;
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = x[i * stride];

    if (is_pow2(n)) {
        for (std::size_t i = 1, j = 0; i < n; ++i) {
            std::size_t bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(scratch[i], scratch[j]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<T> w(static_cast<T>(std::cos(ang * static_cast<double>(k))),
                                        static_cast<T>(std::sin(ang * static_cast<double>(k))));
                for (std::size_t i = 0; i < n; i += len) {
                    const std::complex<T> u = scratch[i + k];
                    const std::complex<T> v = scratch[i + k + len / 2] * w;
                    scratch[i + k] = u + v;
                    scratch[i + k + len / 2] = u - v;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) x[i * stride] = scratch[i];
        return;
    }

    // direct DFT for non power-of-two lengths
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<T> acc{};
        for (std::size_t t = 0; t < n; ++t) {
            const double ang =
                sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            acc += scratch[t] * std::complex<T>(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
        }
        x[k * stride] = acc;
    }
}

/// Transforms every channel of a complex (H, W, C) field in place.
template <typename T>
void transform_2d(std::vector<std::complex<T>>& field, std::size_t h, std::size_t w, std::size_t c,
                  int sign) {
    std::vector<std::complex<T>> plane(h * w);
    std::vector<std::complex<T>> scratch;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < h * w; ++i) plane[i] = field[i * c + ch];
        for (std::size_t r = 0; r < h; ++r) transform_1d(plane.data() + r * w, w, 1, sign, scratch);
        for (std::size_t col = 0; col < w; ++col) transform_1d(plane.data() + col, h, w, sign, scratch);
        for (std::size_t i = 0; i < h * w; ++i) field[i * c + ch] = plane[i];
    }
}

}  // namespace fft_detail

/// Forward 2D DFT over the two spatial axes of an (H, W, C) map, channel by channel.
template <typename T>
ComplexSpectrum<T> fft2d(const Tensor<T>& x) {
    require_rank(x, 3, "fft2d");
    kernel_stats::fft_calls().fetch_add(1, std::memory_order_relaxed);
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    std::vector<std::complex<T>> field(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) field[i] = {x[i], T{0}};
    fft_detail::transform_2d(field, h, w, c, -1);
    ComplexSpectrum<T> s{Tensor<T>(x.shape()), Tensor<T>(x.shape())};
    for (std::size_t i = 0; i < field.size(); ++i) {
        s.re[i] = field[i].real();
        s.im[i] = field[i].imag();
    }
    return s;
}

/// Full complex inverse transform (normalized by 1/(H*W)).
template <typename T>
ComplexSpectrum<T> ifft2d_complex(const ComplexSpectrum<T>& s) {
    require_rank(s.re, 3, "ifft2d");
    require_shape(s.im, s.re.shape(), "ifft2d imaginary plane");
    kernel_stats::fft_calls().fetch_add(1, std::memory_order_relaxed);
    const std::size_t h = s.re.dim(0), w = s.re.dim(1), c = s.re.dim(2);
    std::vector<std::complex<T>> field(s.re.size());
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = {s.re[i], s.im[i]};
    fft_detail::transform_2d(field, h, w, c, +1);
    const T norm = T{1} / static_cast<T>(h * w);
    ComplexSpectrum<T> out{Tensor<T>(s.re.shape()), Tensor<T>(s.re.shape())};
    for (std::size_t i = 0; i < field.size(); ++i) {
        out.re[i] = field[i].real() * norm;
        out.im[i] = field[i].imag() * norm;
    }
    return out;
}

/// Inverse transform keeping only the real part.
template <typename T>
Tensor<T> ifft2d(const ComplexSpectrum<T>& s) {
    return ifft2d_complex(s).re;
}

}  // namespace m2tr
