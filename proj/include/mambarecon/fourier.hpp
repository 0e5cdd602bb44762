#pragma once

// Centered orthonormal 2-D DFT: fft2c = fftshift . DFT . ifftshift / sqrt(HW).
// The DC coefficient lands at (H/2, W/2). Both directions carry 1/sqrt(HW), so
// the transform is unitary and its adjoint is its inverse.

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mambarecon/complex_image.hpp"

namespace mambarecon {

namespace detail {

inline void require_power_of_two(std::size_t h, std::size_t w) {
  if (!std::has_single_bit(h) || !std::has_single_bit(w))
    throw ConfigError("fourier: image extents must be powers of two, got " + std::to_string(h) + "x" +
                      std::to_string(w));
}

/// In-place iterative radix-2 Cooley-Tukey on `n` elements spaced `stride` apart.
inline void fft1d(cplx* data, std::size_t n, std::size_t stride, bool inverse, std::vector<cplx>& scratch) {
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = data[i * stride];
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(scratch[i], scratch[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const cplx twiddle = std::polar(1.0, angle * static_cast<double>(k));
      for (std::size_t start = 0; start < n; start += len) {
        const cplx u = scratch[start + k];
        const cplx v = scratch[start + k + half] * twiddle;
        scratch[start + k] = u + v;
        scratch[start + k + half] = u - v;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) data[i * stride] = scratch[i];
}

/// Cyclic shift by (H/2, W/2); for even extents fftshift and ifftshift coincide.
inline void half_shift(std::vector<cplx>& data, std::size_t h, std::size_t w) {
  std::vector<cplx> out(data.size());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out[((i + h / 2) % h) * w + (j + w / 2) % w] = data[i * w + j];
  data.swap(out);
}

inline void centered_fft2(std::vector<cplx>& data, std::size_t h, std::size_t w, bool inverse) {
  half_shift(data, h, w);
  std::vector<cplx> scratch;
  for (std::size_t i = 0; i < h; ++i) fft1d(data.data() + i * w, w, 1, inverse, scratch);
  for (std::size_t j = 0; j < w; ++j) fft1d(data.data() + j, h, w, inverse, scratch);
  half_shift(data, h, w);
  const double norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto& v : data) v *= norm;
}

inline Tensor centered_fft2(const Tensor& x, bool inverse) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  require_power_of_two(h, w);
  std::vector<cplx> buf(h * w);
  for (std::size_t p = 0; p < buf.size(); ++p) buf[p] = {x[2 * p], x[2 * p + 1]};
  centered_fft2(buf, h, w, inverse);
  Tensor out(x.shape());
  for (std::size_t p = 0; p < buf.size(); ++p) {
    out[2 * p] = buf[p].real();
    out[2 * p + 1] = buf[p].imag();
  }
  return out;
}

inline Var centered_fft2_var(const Var& x, bool inverse) {
  if (x.shape().size() != 3 || x.dim(2) != 2)
    throw DimensionError("fft2c: expected [H,W,2], got " + shape_string(x.shape()));
  return make_result(centered_fft2(x.value(), inverse), {x}, inverse ? "ifft2c" : "fft2c",
                     [inverse](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       *pg[0] += centered_fft2(g, !inverse);
                     });
}

}  // namespace detail

/// Image -> centered k-space.
inline ComplexImage fft2c(const ComplexImage& x) { return ComplexImage(detail::centered_fft2(x.tensor(), false)); }

/// Centered k-space -> image.
inline ComplexImage ifft2c(const ComplexImage& k) { return ComplexImage(detail::centered_fft2(k.tensor(), true)); }

/// Differentiable fft2c on a [H,W,2] tensor; backward applies ifft2c.
inline Var fft2c(const Var& x) { return detail::centered_fft2_var(x, false); }

/// Differentiable ifft2c on a [H,W,2] tensor; backward applies fft2c.
inline Var ifft2c(const Var& k) { return detail::centered_fft2_var(k, true); }

}  // namespace mambarecon
