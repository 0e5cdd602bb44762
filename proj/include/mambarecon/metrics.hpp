#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mambarecon/network.hpp"

namespace mambarecon {

namespace detail {

inline void require_same_image(const Tensor& x, const Tensor& ref, const char* what) {
  if (x.rank() != 2 || x.shape() != ref.shape())
    throw DimensionError(std::string(what) + ": images must be equally sized [H,W], got " + shape_string(x.shape()) +
                         " and " + shape_string(ref.shape()));
}

}  // namespace detail

/// 10 log10(max(ref)^2 / MSE) on magnitude images; +infinity when x == ref.
inline double psnr(const Tensor& x, const Tensor& ref) {
  detail::require_same_image(x, ref, "psnr");
  double peak = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    peak = std::max(peak, ref[i]);
    mse += (x[i] - ref[i]) * (x[i] - ref[i]);
  }
  if (!(peak > 0.0)) throw ContractError("psnr: reference maximum must be positive");
  mse /= static_cast<double>(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Normalized 1-D Gaussian taps.
inline std::vector<double> gaussian_taps(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double c = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

/// Mean local SSIM over every fully contained window position, with the
/// given dynamic range.
inline double ssim(const Tensor& x, const Tensor& ref, double data_range, const SsimOptions& opt = {}) {
  detail::require_same_image(x, ref, "ssim");
  const std::size_t H = x.dim(0), W = x.dim(1), K = opt.window;
  if (H < K || W < K)
    throw ConfigError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) + " is smaller than the " +
                      std::to_string(K) + "x" + std::to_string(K) + " window");
  const auto taps = gaussian_taps(K, opt.sigma);
  const std::size_t oh = H - K + 1, ow = W - K + 1;

  // separable 'valid' filtering
  auto filter = [&](auto&& pixel) {
    std::vector<double> rows(H * ow);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += taps[k] * pixel(i * W + j + k);
        rows[i * ow + j] = acc;
      }
    std::vector<double> out(oh * ow);
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += taps[k] * rows[(i + k) * ow + j];
        out[i * ow + j] = acc;
      }
    return out;
  };
  const auto mx = filter([&](std::size_t p) { return x[p]; });
  const auto my = filter([&](std::size_t p) { return ref[p]; });
  const auto mxx = filter([&](std::size_t p) { return x[p] * x[p]; });
  const auto myy = filter([&](std::size_t p) { return ref[p] * ref[p]; });
  const auto mxy = filter([&](std::size_t p) { return x[p] * ref[p]; });

  const double c1 = (opt.k1 * data_range) * (opt.k1 * data_range);
  const double c2 = (opt.k2 * data_range) * (opt.k2 * data_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

/// SSIM with dynamic range max(ref).
inline double ssim(const Tensor& x, const Tensor& ref, const SsimOptions& opt = {}) {
  detail::require_same_image(x, ref, "ssim");
  const double range = *std::max_element(ref.data().begin(), ref.data().end());
  return ssim(x, ref, range, opt);
}

struct ImageQuality {
  double psnr_db = 0.0;
  double ssim = 0.0;
};

/// The one metric routine every reconstruction method is scored with.
inline ImageQuality image_quality(const ComplexImage& x, const ComplexImage& ref) {
  const Tensor mx = x.magnitude(), mr = ref.magnitude();
  return {psnr(mx, mr), ssim(mx, mr)};
}

// ---------------------------------------------------------------------------
// Effective receptive field

/// Maps a [H,W,2] input image to a [H,W,2] output image.
using ImageModel = std::function<Var(const Var&)>;

/// |x(i,j)| of a [H,W,2] tensor as a differentiable scalar (zero gradient at 0).
inline Var pixel_magnitude(const Var& x, std::size_t i, std::size_t j) {
  const std::size_t p = i * x.dim(1) + j;
  const double re = x.value()[2 * p], im = x.value()[2 * p + 1];
  const double mag = std::hypot(re, im);
  return make_result(scalar_tensor(mag), {x}, "pixel_magnitude",
                     [p, re, im, mag](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       if (mag == 0.0) return;
                       (*pg[0])[2 * p] += g[0] * re / mag;
                       (*pg[0])[2 * p + 1] += g[0] * im / mag;
                     });
}

/// Averaged |d |y(center)| / d x| over the inputs, normalized to max 1 ([H,W]).
inline Tensor effective_receptive_field(const ImageModel& model, const std::vector<ComplexImage>& inputs) {
  if (inputs.empty()) throw ConfigError("effective_receptive_field: no inputs");
  const std::size_t H = inputs.front().height(), W = inputs.front().width();
  Tensor acc(Shape{H, W});
  for (const auto& img : inputs) {
    const Var x = parameter(img.tensor());
    const Var y = model(x);
    const Gradients g = backward(pixel_magnitude(y, H / 2, W / 2));
    const Tensor gx = g.get(x);
    for (std::size_t p = 0; p < H * W; ++p) acc[p] += std::hypot(gx[2 * p], gx[2 * p + 1]);
  }
  const double peak = *std::max_element(acc.data().begin(), acc.data().end());
  if (peak > 0.0)
    for (double& v : acc.data()) v /= peak;
  return acc;
}

/// The trained network seen through the ERF protocol: the sampling mask is all
/// zeros, so data consistency never injects acquired samples.
inline ImageModel erf_network_model(const NetworkParams& params, const NetworkConfig& cfg, const CoilMaps& coils) {
  const Mask zero = Mask::empty(cfg.height, cfg.width);
  return [&params, cfg, coils, zero](const Var& x) { return reconstruct(x, zero, coils, params, cfg); };
}

/// Share of ERF mass at distance > radius from the image center (H/2, W/2).
inline double mass_outside_radius(const Tensor& erf, double radius) {
  const std::size_t H = erf.dim(0), W = erf.dim(1);
  double total = 0.0, outside = 0.0;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double di = static_cast<double>(i) - static_cast<double>(H / 2);
      const double dj = static_cast<double>(j) - static_cast<double>(W / 2);
      const double v = erf[i * W + j];
      total += v;
      if (std::hypot(di, dj) > radius) outside += v;
    }
  return total > 0.0 ? outside / total : 0.0;
}

/// 8-bit binary PGM (P5) of a [H,W] image scaled so its maximum maps to 255.
inline void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw DimensionError("write_pgm: expected [H,W]");
  const double peak = *std::max_element(image.data().begin(), image.data().end());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  for (double v : image.data()) {
    const double s = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(s * 255.0))));
  }
}

}  // namespace mambarecon
