#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "mambarecon/autodiff.hpp"

namespace mambarecon {

using cplx = std::complex<double>;

/// H x W complex image held as a [H,W,2] tensor (real, imaginary) so the
/// network can treat it as a 2-channel real image.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(std::size_t height, std::size_t width) : data_(Shape{height, width, 2}) {}

  explicit ComplexImage(Tensor t) : data_(std::move(t)) {
    if (data_.rank() != 3 || data_.dim(2) != 2)
      throw DimensionError("complex image must be [H,W,2], got " + shape_string(data_.shape()));
  }

  static ComplexImage from_complex(std::size_t height, std::size_t width, const std::vector<cplx>& values) {
    if (values.size() != height * width) throw DimensionError("complex image: value count does not match extents");
    ComplexImage img(height, width);
    for (std::size_t i = 0; i < values.size(); ++i) {
      img.data_[2 * i] = values[i].real();
      img.data_[2 * i + 1] = values[i].imag();
    }
    return img;
  }

  std::size_t height() const { return data_.empty() ? 0 : data_.dim(0); }
  std::size_t width() const { return data_.empty() ? 0 : data_.dim(1); }
  std::size_t pixels() const { return data_.size() / 2; }

  cplx at(std::size_t i, std::size_t j) const { return pixel((i * width() + j)); }
  void set(std::size_t i, std::size_t j, cplx v) { set_pixel(i * width() + j, v); }

  cplx pixel(std::size_t flat) const { return {data_[2 * flat], data_[2 * flat + 1]}; }
  void set_pixel(std::size_t flat, cplx v) {
    data_[2 * flat] = v.real();
    data_[2 * flat + 1] = v.imag();
  }

  std::vector<cplx> to_complex() const {
    std::vector<cplx> out(pixels());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixel(i);
    return out;
  }

  /// |x| per pixel, [H,W].
  Tensor magnitude() const {
    Tensor out(Shape{height(), width()});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(data_[2 * i], data_[2 * i + 1]);
    return out;
  }

  const Tensor& tensor() const { return data_; }
  Tensor& tensor() { return data_; }

  bool same_extents(const ComplexImage& other) const {
    return height() == other.height() && width() == other.width();
  }

  friend bool operator==(const ComplexImage&, const ComplexImage&) = default;

 private:
  Tensor data_;
};

namespace detail {

inline void require_complex_grid(const Var& x, std::size_t h, std::size_t w, const char* op) {
  if (x.shape() != Shape{h, w, 2})
    throw DimensionError(std::string(op) + ": expected [" + std::to_string(h) + "," + std::to_string(w) +
                         ",2], got " + shape_string(x.shape()));
}

}  // namespace detail

/// Pixelwise complex product with a fixed map (optionally conjugated).
inline Var complex_multiply(const Var& x, const ComplexImage& c, bool conjugate = false) {
  detail::require_complex_grid(x, c.height(), c.width(), "complex_multiply");
  const double sign = conjugate ? -1.0 : 1.0;
  Tensor out(x.shape());
  const auto& xv = x.value();
  const auto& cv = c.tensor();
  for (std::size_t p = 0; p < c.pixels(); ++p) {
    const double a = xv[2 * p], b = xv[2 * p + 1];
    const double cr = cv[2 * p], ci = sign * cv[2 * p + 1];
    out[2 * p] = a * cr - b * ci;
    out[2 * p + 1] = a * ci + b * cr;
  }
  // Adjoint of multiplication by c is multiplication by conj(c).
  return make_result(std::move(out), {x}, "complex_multiply",
                     [c, sign](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       const auto& cv = c.tensor();
                       for (std::size_t p = 0; p < c.pixels(); ++p) {
                         const double gr = g[2 * p], gi = g[2 * p + 1];
                         const double cr = cv[2 * p], ci = -sign * cv[2 * p + 1];
                         (*pg[0])[2 * p] += gr * cr - gi * ci;
                         (*pg[0])[2 * p + 1] += gr * ci + gi * cr;
                       }
                     });
}

/// Multiply both channels of a [H,W,2] tensor by a real [H,W] weight (e.g. a sampling mask).
inline Var mask_multiply(const Var& x, const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("mask_multiply: mask must be [H,W]");
  detail::require_complex_grid(x, mask.dim(0), mask.dim(1), "mask_multiply");
  Tensor out = x.value();
  for (std::size_t p = 0; p < mask.size(); ++p) {
    out[2 * p] *= mask[p];
    out[2 * p + 1] *= mask[p];
  }
  return make_result(std::move(out), {x}, "mask_multiply",
                     [mask](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       for (std::size_t p = 0; p < mask.size(); ++p) {
                         (*pg[0])[2 * p] += g[2 * p] * mask[p];
                         (*pg[0])[2 * p + 1] += g[2 * p + 1] * mask[p];
                       }
                     });
}

}  // namespace mambarecon
