#pragma once

// Full reconstruction network:
//   t   = P0(x_us)
//   t   = DC_i(VSSM_i(t))      for i = 1..depth   (only_dc skips VSSM_i)
//   x_r = project(U_final(t))  (hard consistency with the acquired samples)

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mambarecon/data_consistency.hpp"

namespace mambarecon {

enum class Variant { mamba, only_dc };

inline std::string to_string(Variant v) { return v == Variant::mamba ? "mamba" : "only_dc"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "mamba") return Variant::mamba;
  if (s == "only_dc") return Variant::only_dc;
  throw ConfigError("unknown variant '" + s + "' (expected mamba or only_dc)");
}

struct NetworkConfig {
  std::size_t depth = 6;
  std::size_t hidden_dim = 128;
  std::size_t state_dim = 16;
  std::size_t patch_size = 2;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t ncoils = 1;
  std::size_t dt_rank = 0;  ///< 0 selects ceil(hidden_dim / 16)
  bool per_direction_ssm = false;
  Variant variant = Variant::mamba;
  BbarMode bbar_mode = BbarMode::zoh_full;

  std::size_t effective_dt_rank() const { return dt_rank ? dt_rank : default_dt_rank(hidden_dim); }

  void validate() const {
    if (depth == 0) throw ConfigError("network: depth must be >= 1");
    if (hidden_dim == 0 || state_dim == 0 || patch_size == 0) throw ConfigError("network: dimensions must be positive");
    if (height == 0 || width == 0 || height % patch_size || width % patch_size)
      throw ConfigError("network: image " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by patch size " + std::to_string(patch_size));
    if (ncoils == 0) throw ConfigError("network: ncoils must be >= 1");
  }
};

struct NetworkParams {
  Var embed_w, embed_b;  ///< initial patch embedding
  std::vector<VssmBlockParams> vssm;
  std::vector<DcBlockParams> dc;
  Var final_w, final_b;  ///< final unpatchify

  /// Every trainable tensor, in a fixed order (the checkpoint order).
  std::vector<std::pair<std::string, Var>> named() const {
    std::vector<std::pair<std::string, Var>> out{{"embed.w", embed_w}, {"embed.b", embed_b}};
    for (std::size_t i = 0; i < dc.size(); ++i) {
      if (i < vssm.size()) {
        const auto vs = vssm[i].all();
        for (std::size_t k = 0; k < vs.size(); ++k) out.emplace_back("vssm" + std::to_string(i) + "." + std::to_string(k), vs[k]);
      }
      const auto ds = dc[i].all();
      for (std::size_t k = 0; k < ds.size(); ++k) out.emplace_back("dc" + std::to_string(i) + "." + std::to_string(k), ds[k]);
    }
    out.emplace_back("final.w", final_w);
    out.emplace_back("final.b", final_b);
    return out;
  }

  std::vector<Var> all() const {
    std::vector<Var> out;
    for (auto& [name, v] : named()) out.push_back(v);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : all()) n += v.size();
    return n;
  }
};

/// Published total for the full-size network (depth 6, D 128, N 16, p 2).
inline constexpr double kReferenceParamCount = 2.05e6;

/// Scalar parameter count:
///   embed + final:      2 * (2p^2 D) + D + 2p^2
///   per VSSM block:     4D (norms) + 3(D^2 + D) (in/gate/out) + 9D (dwconv)
///                       + S * (3DN + 2DR + 2D)   (S = 4 with per-direction scans, else 1)
///   per DC block:       2 * (2p^2 D) + 2p^2 + D
inline std::size_t param_count(const NetworkConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.hidden_dim, p = cfg.patch_size, f = 2 * p * p;
  std::size_t total = (f * D + D) + (D * f + f);
  const std::size_t per_layer = dc_param_count(D, p) + (cfg.variant == Variant::mamba
                                                           ? vssm_param_count(D, cfg.state_dim, cfg.effective_dt_rank(),
                                                                              cfg.per_direction_ssm)
                                                           : 0);
  return total + cfg.depth * per_layer;
}

/// Deterministic initialization from `seed`. The final unpatchify starts at
/// zero so the untrained network returns the projection of a zero estimate.
inline NetworkParams build(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t D = cfg.hidden_dim, p = cfg.patch_size, f = 2 * p * p;
  NetworkParams params;
  params.embed_w = parameter(fan_in_uniform(f, D, rng));
  params.embed_b = parameter(Tensor(Shape{D}));
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    if (cfg.variant == Variant::mamba)
      params.vssm.push_back(
          init_vssm_params(D, cfg.state_dim, cfg.effective_dt_rank(), cfg.per_direction_ssm, rng));
    params.dc.push_back(init_dc_params(D, p, rng));
  }
  params.final_w = parameter(Tensor(Shape{D, f}));
  params.final_b = parameter(Tensor(Shape{f}));
  return params;
}

/// Differentiable forward pass; x_us is [H,W,2].
inline Var reconstruct(const Var& x_us, const Mask& mask, const CoilMaps& coils, const NetworkParams& params,
                       const NetworkConfig& cfg) {
  if (x_us.shape() != Shape{cfg.height, cfg.width, 2})
    throw DimensionError("reconstruct: input " + shape_string(x_us.shape()) + " does not match the configured " +
                         std::to_string(cfg.height) + "x" + std::to_string(cfg.width) + " image");
  const std::size_t p = cfg.patch_size;
  Var t = patch_embed(x_us, p, params.embed_w, params.embed_b);
  for (std::size_t i = 0; i < params.dc.size(); ++i) {
    if (i < params.vssm.size()) t = vssm_forward(t, params.vssm[i], cfg.bbar_mode);
    t = dc_apply(t, x_us, coils, mask, params.dc[i], p);
  }
  return hard_consistency_project(unpatchify(t, p, params.final_w, params.final_b), x_us, coils, mask);
}

inline ComplexImage reconstruct(const ComplexImage& x_us, const Mask& mask, const CoilMaps& coils,
                                const NetworkParams& params, const NetworkConfig& cfg) {
  return ComplexImage(reconstruct(constant(x_us.tensor()), mask, coils, params, cfg).value());
}

}  // namespace mambarecon
