#pragma once

// Synthetic brain-like phantoms and paired (fully sampled, zero-filled)
// datasets.
//
// Dataset directory layout:
//   <root>/dataset.cfg                 generation settings (key = value)
//   <root>/<split>/<index>.xfs.mrtn    fully sampled image      [H,W,2]
//   <root>/<split>/<index>.coils.mrtn  coil maps                [ncoils,H,W,2]
//   <root>/<split>/<index>.R<r>.mask.mrtn   sampling mask       [H,W]
//   <root>/<split>/<index>.R<r>.xus.mrtn    zero-filled image   [H,W,2]
// with <index> zero-padded to four digits and split in {train, val, test}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mambarecon/forward_model.hpp"
#include "mambarecon/tensor_io.hpp"

namespace mambarecon {

struct PhantomSpec {
  std::size_t size = 64;
  std::size_t min_ellipses = 4;  ///< interior structures, besides the head outline
  std::size_t max_ellipses = 10;
  double min_intensity = 0.5;    ///< head (outer ellipse) intensity range
  double max_intensity = 0.8;
  double phase_scale = 1.0;      ///< peak phase excursion in radians
  std::uint64_t seed = 1;
};

struct Ellipse {
  double ci, cj;    ///< center (pixels)
  double ai, aj;    ///< semi-axes (pixels)
  double angle;     ///< rotation (radians)
  double value;     ///< additive magnitude contribution

  bool contains(double i, double j) const {
    const double di = i - ci, dj = j - cj;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * di + s * dj) / ai, v = (-s * di + c * dj) / aj;
    return u * u + v * v <= 1.0;
  }
};

/// Geometry of one phantom: the head outline first, then interior structures.
struct PhantomLayout {
  std::vector<Ellipse> ellipses;
  double phase_coeffs[5] = {};  ///< x, y, x^2, y^2, xy on [-1,1]^2 coordinates
};

inline PhantomLayout phantom_layout(const PhantomSpec& spec, std::size_t index) {
  if (spec.size == 0 || spec.min_ellipses > spec.max_ellipses) throw ConfigError("phantom: invalid spec");
  Rng rng({spec.seed, static_cast<std::uint64_t>(index), 0x9A47u});
  const double n = static_cast<double>(spec.size);
  PhantomLayout layout;
  Ellipse head{n / 2 + rng.uniform(-0.03, 0.03) * n, n / 2 + rng.uniform(-0.03, 0.03) * n,
               rng.uniform(0.36, 0.44) * n, rng.uniform(0.30, 0.38) * n, rng.uniform(-0.3, 0.3),
               rng.uniform(spec.min_intensity, spec.max_intensity)};
  layout.ellipses.push_back(head);
  const std::size_t count =
      spec.min_ellipses + rng.index(spec.max_ellipses - spec.min_ellipses + 1);
  for (std::size_t k = 0; k < count; ++k) {
    const double r = 0.6 * std::sqrt(rng.uniform());
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Ellipse e{head.ci + r * head.ai * std::sin(theta), head.cj + r * head.aj * std::cos(theta),
              rng.uniform(0.04, 0.16) * n, rng.uniform(0.04, 0.16) * n, rng.uniform(0.0, std::numbers::pi),
              rng.uniform(-0.3, 0.3)};
    layout.ellipses.push_back(e);
  }
  for (double& c : layout.phase_coeffs) c = rng.uniform(-1.0, 1.0);
  return layout;
}

/// Piecewise-constant magnitude in [0,1] times a smooth quadratic phase.
inline ComplexImage render_phantom(const PhantomSpec& spec, const PhantomLayout& layout) {
  const std::size_t n = spec.size;
  ComplexImage img(n, n);
  const auto& pc = layout.phase_coeffs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double fi = static_cast<double>(i), fj = static_cast<double>(j);
      double mag = 0.0;
      for (std::size_t k = 0; k < layout.ellipses.size(); ++k) {
        const Ellipse& e = layout.ellipses[k];
        // interior structures only exist inside the head
        if (e.contains(fi, fj) && (k == 0 || layout.ellipses[0].contains(fi, fj))) mag += e.value;
      }
      mag = std::clamp(mag, 0.0, 1.0);
      const double y = 2.0 * fi / static_cast<double>(n) - 1.0, x = 2.0 * fj / static_cast<double>(n) - 1.0;
      const double phase = spec.phase_scale * 0.2 * (pc[0] * x + pc[1] * y + pc[2] * x * x + pc[3] * y * y + pc[4] * x * y);
      img.set(i, j, std::polar(mag, phase));
    }
  return img;
}

inline ComplexImage generate_phantom(const PhantomSpec& spec, std::size_t index) {
  return render_phantom(spec, phantom_layout(spec, index));
}

struct DatasetConfig {
  PhantomSpec phantom;
  std::size_t n_train = 200;
  std::size_t n_val = 10;
  std::size_t n_test = 20;
  std::vector<double> accelerations{4.0};
  std::uint64_t mask_seed = 1;
  std::size_t calib = 8;
  double mask_sigma = 0.0;  ///< 0 selects default_mask_sigma()
  std::size_t ncoils = 1;
  double coil_width = 0.35;
};

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

/// Phantom indices of a split; the three ranges are disjoint and consecutive.
inline std::vector<std::size_t> split_indices(const DatasetConfig& cfg, Split split) {
  std::size_t begin = 0, count = cfg.n_train;
  if (split == Split::val) begin = cfg.n_train, count = cfg.n_val;
  if (split == Split::test) begin = cfg.n_train + cfg.n_val, count = cfg.n_test;
  std::vector<std::size_t> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = begin + k;
  return out;
}

/// One training/evaluation example at one acceleration.
struct Sample {
  std::size_t index = 0;
  double acceleration = 0.0;
  ComplexImage x_fs;
  ComplexImage x_us;
  Mask mask;
  CoilMaps coils;
};

inline std::uint64_t mask_seed_for(const DatasetConfig& cfg, std::size_t index, double acceleration) {
  Rng rng({cfg.mask_seed, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(std::llround(acceleration * 1000)),
           0x3A5Cu});
  return rng.next_u64();
}

inline std::uint64_t coil_seed_for(const DatasetConfig& cfg, std::size_t index) {
  Rng rng({cfg.phantom.seed, static_cast<std::uint64_t>(index), 0xC011u});
  return rng.next_u64();
}

inline CoilMaps coils_for(const DatasetConfig& cfg, std::size_t index) {
  return generate_coil_maps(cfg.phantom.size, cfg.phantom.size, cfg.ncoils, coil_seed_for(cfg, index),
                            {cfg.coil_width});
}

/// Fully determined by (config, index, acceleration).
inline Sample make_sample(const DatasetConfig& cfg, std::size_t index, double acceleration) {
  const std::size_t n = cfg.phantom.size;
  Sample s;
  s.index = index;
  s.acceleration = acceleration;
  s.x_fs = generate_phantom(cfg.phantom, index);
  s.coils = coils_for(cfg, index);
  s.mask = generate_gaussian_mask(n, n, acceleration, mask_seed_for(cfg, index, acceleration),
                                  {cfg.calib, cfg.mask_sigma});
  s.x_us = zero_filled(encode(s.x_fs, s.coils, s.mask), s.coils, s.mask);
  return s;
}

/// Samples of a split in (index, acceleration) order.
inline std::vector<Sample> make_split(const DatasetConfig& cfg, Split split) {
  std::vector<Sample> out;
  for (std::size_t idx : split_indices(cfg, split))
    for (double r : cfg.accelerations) out.push_back(make_sample(cfg, idx, r));
  return out;
}

namespace detail {

inline std::string index_stem(std::size_t index) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

inline std::string accel_tag(double r) {
  std::ostringstream os;
  os << 'R' << r;
  return os.str();
}

inline Tensor stack_coils(const CoilMaps& coils) {
  const std::size_t h = coils.height(), w = coils.width();
  Tensor out(Shape{coils.count(), h, w, 2});
  for (std::size_t c = 0; c < coils.count(); ++c)
    std::copy(coils.maps[c].tensor().data().begin(), coils.maps[c].tensor().data().end(),
              out.data().begin() + static_cast<long>(c * h * w * 2));
  return out;
}

inline CoilMaps unstack_coils(const Tensor& t) {
  if (t.rank() != 4 || t.dim(3) != 2) throw DimensionError("coil tensor must be [ncoils,H,W,2]");
  const std::size_t h = t.dim(1), w = t.dim(2), stride = h * w * 2;
  CoilMaps coils;
  for (std::size_t c = 0; c < t.dim(0); ++c) {
    std::vector<double> v(t.data().begin() + static_cast<long>(c * stride),
                          t.data().begin() + static_cast<long>((c + 1) * stride));
    coils.maps.emplace_back(Tensor(Shape{h, w, 2}, std::move(v)));
  }
  return coils;
}

}  // namespace detail

struct SamplePaths {
  std::filesystem::path xfs, coils, mask, xus;
};

inline SamplePaths sample_paths(const std::filesystem::path& root, Split split, std::size_t index, double r) {
  const auto dir = root / to_string(split);
  const std::string stem = detail::index_stem(index);
  const std::string tag = detail::accel_tag(r);
  return {dir / (stem + ".xfs.mrtn"), dir / (stem + ".coils.mrtn"), dir / (stem + "." + tag + ".mask.mrtn"),
          dir / (stem + "." + tag + ".xus.mrtn")};
}

inline void save_sample(const std::filesystem::path& root, Split split, const Sample& s) {
  const auto paths = sample_paths(root, split, s.index, s.acceleration);
  std::filesystem::create_directories(paths.xfs.parent_path());
  save_tensor(paths.xfs, s.x_fs.tensor());
  save_tensor(paths.coils, detail::stack_coils(s.coils));
  save_tensor(paths.mask, s.mask.grid);
  save_tensor(paths.xus, s.x_us.tensor());
}

inline Sample load_sample(const std::filesystem::path& root, Split split, std::size_t index, double r) {
  const auto paths = sample_paths(root, split, index, r);
  Sample s;
  s.index = index;
  s.acceleration = r;
  s.x_fs = ComplexImage(load_tensor(paths.xfs));
  s.coils = detail::unstack_coils(load_tensor(paths.coils));
  s.mask = Mask{load_tensor(paths.mask), r, 0};
  s.x_us = ComplexImage(load_tensor(paths.xus));
  return s;
}

}  // namespace mambarecon
