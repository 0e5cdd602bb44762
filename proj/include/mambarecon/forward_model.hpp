#pragma once

// MRI encoding: y_c = M . fft2c(C_c . x) for every coil c, and its adjoint
// (the zero-filled, coil-combined image).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mambarecon/fourier.hpp"
#include "mambarecon/rng.hpp"

namespace mambarecon {

/// Binary k-space sampling pattern.
struct Mask {
  Tensor grid;  ///< [H,W], entries 0 or 1
  double acceleration = 1.0;
  std::uint64_t seed = 0;

  std::size_t height() const { return grid.dim(0); }
  std::size_t width() const { return grid.dim(1); }
  std::size_t sampled() const {
    std::size_t n = 0;
    for (double v : grid.data()) n += v != 0.0;
    return n;
  }

  static Mask full(std::size_t h, std::size_t w) { return {Tensor(Shape{h, w}, 1.0), 1.0, 0}; }
  static Mask empty(std::size_t h, std::size_t w) {
    return {Tensor(Shape{h, w}, 0.0), static_cast<double>(h * w), 0};
  }
};

/// Coil sensitivity profiles, normalized so that sum_c |C_c|^2 == 1 per pixel.
struct CoilMaps {
  std::vector<ComplexImage> maps;

  std::size_t count() const { return maps.size(); }
  std::size_t height() const { return maps.front().height(); }
  std::size_t width() const { return maps.front().width(); }

  static CoilMaps single(std::size_t h, std::size_t w) {
    ComplexImage one(h, w);
    for (std::size_t p = 0; p < one.pixels(); ++p) one.set_pixel(p, 1.0);
    return {{std::move(one)}};
  }
};

/// Per-coil undersampled k-space.
struct KSpace {
  std::vector<ComplexImage> coils;
};

struct MaskOptions {
  std::size_t calib = 8;  ///< side of the always-sampled central block
  double sigma = 0.0;     ///< Gaussian density width in pixels; 0 selects default_mask_sigma()
};

/// Default density width: 0.15 min(H,W) at R<=4, 0.10 min(H,W) at R>=8,
/// linear in R in between.
inline double default_mask_sigma(std::size_t h, std::size_t w, double acceleration) {
  const double t = std::clamp((acceleration - 4.0) / 4.0, 0.0, 1.0);
  return (0.15 + t * (0.10 - 0.15)) * static_cast<double>(std::min(h, w));
}

/// Variable-density Gaussian mask with exactly floor(H*W/R) samples, including
/// a fully sampled calib x calib block at the k-space center.
///
/// The remaining locations are drawn without replacement with probability
/// proportional to exp(-(dx^2+dy^2)/(2 sigma^2)). Sequential weighted draws are
/// realized in one pass with exponential keys (Efraimidis-Spirakis), evaluated
/// in log space so far-out weights never underflow.
inline Mask generate_gaussian_mask(std::size_t h, std::size_t w, double acceleration, std::uint64_t seed,
                                   MaskOptions options = {}) {
  if (h == 0 || w == 0) throw ConfigError("mask: empty grid");
  if (!(acceleration >= 1.0)) throw ConfigError("mask: acceleration must be >= 1, got " + std::to_string(acceleration));
  const auto target = static_cast<std::size_t>(std::floor(static_cast<double>(h * w) / acceleration));
  const std::size_t calib = options.calib;
  if (calib > h || calib > w) throw ConfigError("mask: calibration block larger than the grid");
  if (calib * calib > target)
    throw ConfigError("mask: calibration block of " + std::to_string(calib * calib) + " samples exceeds the budget of " +
                      std::to_string(target) + " at R=" + std::to_string(acceleration));
  const double sigma = options.sigma > 0 ? options.sigma : default_mask_sigma(h, w, acceleration);

  Mask mask{Tensor(Shape{h, w}), acceleration, seed};
  const std::size_t c0 = h / 2 - calib / 2, c1 = w / 2 - calib / 2;
  for (std::size_t i = c0; i < c0 + calib; ++i)
    for (std::size_t j = c1; j < c1 + calib; ++j) mask.grid[i * w + j] = 1.0;

  Rng rng(seed);
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double u = rng.uniform_open_low();  // drawn for every cell so the stream is layout-independent
      if (mask.grid[i * w + j] != 0.0) continue;
      const double dy = static_cast<double>(i) - static_cast<double>(h / 2);
      const double dx = static_cast<double>(j) - static_cast<double>(w / 2);
      // smallest log(E) - log(weight) wins, E ~ Exp(1)
      const double key = std::log(-std::log(u)) + (dx * dx + dy * dy) / (2.0 * sigma * sigma);
      keys.emplace_back(key, i * w + j);
    }
  const std::size_t remaining = target - calib * calib;
  std::partial_sort(keys.begin(), keys.begin() + static_cast<long>(remaining), keys.end());
  for (std::size_t k = 0; k < remaining; ++k) mask.grid[keys[k].second] = 1.0;
  return mask;
}

struct CoilOptions {
  double width_fraction = 0.35;  ///< Gaussian profile width as a fraction of min(H,W)
};

/// Synthetic smooth coil profiles: Gaussian bumps centered on a ring at the
/// image border, each with a gentle linear phase ramp, then normalized
/// pixelwise. A single coil is the constant map 1.
inline CoilMaps generate_coil_maps(std::size_t h, std::size_t w, std::size_t ncoils, std::uint64_t seed,
                                   CoilOptions options = {}) {
  if (ncoils == 0) throw ConfigError("coil maps: need at least one coil");
  if (ncoils == 1) return CoilMaps::single(h, w);
  Rng rng(seed);
  const double extent = static_cast<double>(std::min(h, w));
  const double width = options.width_fraction * extent;
  const double ring = 0.5 * extent;
  CoilMaps coils;
  std::vector<double> energy(h * w, 0.0);
  for (std::size_t c = 0; c < ncoils; ++c) {
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(c) + rng.uniform(-0.15, 0.15)) /
                         static_cast<double>(ncoils);
    const double ci = static_cast<double>(h) / 2 + ring * std::sin(angle);
    const double cj = static_cast<double>(w) / 2 + ring * std::cos(angle);
    const double phase0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double ramp_i = rng.uniform(-1.0, 1.0) * std::numbers::pi / extent;
    const double ramp_j = rng.uniform(-1.0, 1.0) * std::numbers::pi / extent;
    ComplexImage map(h, w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double di = static_cast<double>(i) - ci, dj = static_cast<double>(j) - cj;
        const double mag = std::exp(-(di * di + dj * dj) / (2.0 * width * width));
        const double phase = phase0 + ramp_i * static_cast<double>(i) + ramp_j * static_cast<double>(j);
        const cplx v = std::polar(mag, phase);
        map.set(i, j, v);
        energy[i * w + j] += std::norm(v);
      }
    coils.maps.push_back(std::move(map));
  }
  for (auto& map : coils.maps)
    for (std::size_t p = 0; p < map.pixels(); ++p) map.set_pixel(p, map.pixel(p) / std::sqrt(energy[p]));
  return coils;
}

namespace detail {

inline void require_encoding_dims(const ComplexImage& x, const CoilMaps& c, const Mask& m) {
  if (c.maps.empty()) throw DimensionError("encoding: no coil maps");
  for (const auto& map : c.maps)
    if (!map.same_extents(x)) throw DimensionError("encoding: coil map extents differ from the image");
  if (m.grid.shape() != Shape{x.height(), x.width()}) throw DimensionError("encoding: mask extents differ from the image");
}

inline ComplexImage masked(ComplexImage k, const Mask& m) {
  for (std::size_t p = 0; p < k.pixels(); ++p)
    if (m.grid[p] == 0.0) k.set_pixel(p, 0.0);
  return k;
}

inline ComplexImage pixelwise(const ComplexImage& a, const ComplexImage& c, bool conjugate) {
  ComplexImage out(a.height(), a.width());
  for (std::size_t p = 0; p < a.pixels(); ++p)
    out.set_pixel(p, a.pixel(p) * (conjugate ? std::conj(c.pixel(p)) : c.pixel(p)));
  return out;
}

}  // namespace detail

/// y_c = M . fft2c(C_c . x).
inline KSpace encode(const ComplexImage& x, const CoilMaps& coils, const Mask& mask) {
  detail::require_encoding_dims(x, coils, mask);
  KSpace y;
  for (const auto& map : coils.maps) y.coils.push_back(detail::masked(fft2c(detail::pixelwise(x, map, false)), mask));
  return y;
}

/// Adjoint of encode: sum_c conj(C_c) . ifft2c(M . y_c).
inline ComplexImage zero_filled(const KSpace& y, const CoilMaps& coils, const Mask& mask) {
  if (y.coils.size() != coils.count()) throw DimensionError("zero_filled: coil count mismatch");
  ComplexImage out(coils.height(), coils.width());
  for (std::size_t c = 0; c < coils.count(); ++c) {
    detail::require_encoding_dims(y.coils[c], coils, mask);
    const ComplexImage img = detail::pixelwise(ifft2c(detail::masked(y.coils[c], mask)), coils.maps[c], true);
    out.tensor() += img.tensor();
  }
  return out;
}

}  // namespace mambarecon
