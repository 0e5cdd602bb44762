#pragma once

// 2-D visual state space block: tokens on a grid are unfolded into four 1-D
// sequences, scanned independently, folded back and summed.
//
//   u    = LN1(t)
//   main = SiLU(DWConv3x3(u W_in + b_in))
//   s    = LN2(sum_k fold_k(scan(unfold_k(main))))
//   gate = SiLU(u W_gate + b_gate)
//   out  = (s * gate) W_out + b_out + t

#include <array>
#include <string>
#include <vector>

#include "mambarecon/ssm.hpp"

namespace mambarecon {

/// Traversal orders of the token grid.
enum class Direction : std::size_t {
  row_major = 0,          ///< top-left to bottom-right, along rows
  row_major_reversed = 1, ///< bottom-right to top-left
  col_major = 2,          ///< top-left to bottom-right, along columns
  col_major_reversed = 3, ///< bottom-right to top-left, along columns
};

inline constexpr std::size_t kDirections = 4;

/// Grid index (row * gw + col) visited at each sequence position.
inline std::vector<std::size_t> direction_order(std::size_t gh, std::size_t gw, Direction dir) {
  const std::size_t L = gh * gw;
  std::vector<std::size_t> order(L);
  for (std::size_t s = 0; s < L; ++s) {
    switch (dir) {
      case Direction::row_major: order[s] = s; break;
      case Direction::row_major_reversed: order[s] = L - 1 - s; break;
      case Direction::col_major: order[s] = (s % gh) * gw + s / gh; break;
      case Direction::col_major_reversed: {
        const std::size_t r = L - 1 - s;
        order[s] = (r % gh) * gw + r / gh;
        break;
      }
    }
  }
  return order;
}

namespace detail {

inline std::array<std::vector<std::size_t>, kDirections> all_orders(std::size_t gh, std::size_t gw) {
  return {direction_order(gh, gw, Direction::row_major), direction_order(gh, gw, Direction::row_major_reversed),
          direction_order(gh, gw, Direction::col_major), direction_order(gh, gw, Direction::col_major_reversed)};
}

}  // namespace detail

/// [gh,gw,D] token grid -> [4,L,D] sequences, one per Direction.
inline Var unfold_directions(const Var& grid) {
  if (grid.shape().size() != 3) throw DimensionError("unfold_directions: expected [gh,gw,D], got " + shape_string(grid.shape()));
  const std::size_t gh = grid.dim(0), gw = grid.dim(1), D = grid.dim(2), L = gh * gw;
  auto orders = detail::all_orders(gh, gw);
  Tensor out(Shape{kDirections, L, D});
  for (std::size_t k = 0; k < kDirections; ++k)
    for (std::size_t s = 0; s < L; ++s)
      std::copy_n(grid.value().data().data() + orders[k][s] * D, D, out.data().data() + (k * L + s) * D);
  return make_result(std::move(out), {grid}, "unfold_directions",
                     [orders, L, D](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       for (std::size_t k = 0; k < kDirections; ++k)
                         for (std::size_t s = 0; s < L; ++s)
                           for (std::size_t d = 0; d < D; ++d) (*pg[0])[orders[k][s] * D + d] += g[(k * L + s) * D + d];
                     });
}

/// [4,L,D] sequences -> [gh,gw,D]: each sequence is put back in grid order,
/// then the four are summed (in direction order).
inline Var fold_merge(const Var& seqs, std::size_t gh, std::size_t gw) {
  if (seqs.shape().size() != 3 || seqs.dim(0) != kDirections || seqs.dim(1) != gh * gw)
    throw DimensionError("fold_merge: expected [4," + std::to_string(gh * gw) + ",D], got " + shape_string(seqs.shape()));
  const std::size_t D = seqs.dim(2), L = gh * gw;
  auto orders = detail::all_orders(gh, gw);
  Tensor out(Shape{gh, gw, D});
  for (std::size_t k = 0; k < kDirections; ++k)
    for (std::size_t s = 0; s < L; ++s)
      for (std::size_t d = 0; d < D; ++d) out[orders[k][s] * D + d] += seqs.value()[(k * L + s) * D + d];
  return make_result(std::move(out), {seqs}, "fold_merge",
                     [orders, L, D](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       for (std::size_t k = 0; k < kDirections; ++k)
                         for (std::size_t s = 0; s < L; ++s)
                           for (std::size_t d = 0; d < D; ++d) (*pg[0])[(k * L + s) * D + d] += g[orders[k][s] * D + d];
                     });
}

/// Strided p x p convolution from the 2-channel image [H,W,2] to a [H/p,W/p,D]
/// token grid. `w` is [2p^2, D] over (row-in-patch, col-in-patch, channel).
inline Var patch_embed(const Var& image, std::size_t p, const Var& w, const Var& b) {
  return linear(space_to_depth(image, p), w, b);
}

/// Per-token linear map D -> 2p^2, rearranged into a [gh*p, gw*p, 2] image.
inline Var unpatchify(const Var& tokens, std::size_t p, const Var& w, const Var& b) {
  return depth_to_space(linear(tokens, w, b), p, 2);
}

struct VssmBlockParams {
  Var norm1_gamma, norm1_beta;  ///< [D]
  Var w_in, b_in;               ///< [D,D], [D]
  Var w_gate, b_gate;           ///< [D,D], [D]
  Var dw_kernel;                ///< [3,3,D]
  std::vector<SsmParams> ssm;   ///< one shared scan, or one per Direction
  Var norm2_gamma, norm2_beta;  ///< [D]
  Var w_out, b_out;             ///< [D,D], [D]

  std::vector<Var> all() const {
    std::vector<Var> v{norm1_gamma, norm1_beta, w_in, b_in, w_gate, b_gate, dw_kernel};
    for (const auto& s : ssm)
      for (const auto& p : s.all()) v.push_back(p);
    for (const auto& p : {norm2_gamma, norm2_beta, w_out, b_out}) v.push_back(p);
    return v;
  }
};

inline constexpr std::size_t kDwKernel = 3;

inline std::size_t vssm_param_count(std::size_t D, std::size_t N, std::size_t R, bool per_direction) {
  const std::size_t norms = 4 * D;
  const std::size_t projections = 3 * (D * D + D);
  const std::size_t dwconv = kDwKernel * kDwKernel * D;
  return norms + projections + dwconv + (per_direction ? kDirections : 1) * ssm_param_count(D, N, R);
}

inline VssmBlockParams init_vssm_params(std::size_t D, std::size_t N, std::size_t R, bool per_direction, Rng& rng) {
  VssmBlockParams p;
  p.norm1_gamma = parameter(Tensor(Shape{D}, 1.0));
  p.norm1_beta = parameter(Tensor(Shape{D}));
  p.w_in = parameter(fan_in_uniform(D, D, rng));
  p.b_in = parameter(Tensor(Shape{D}));
  p.w_gate = parameter(fan_in_uniform(D, D, rng));
  p.b_gate = parameter(Tensor(Shape{D}));
  Tensor kernel(Shape{kDwKernel, kDwKernel, D});
  const double bound = 1.0 / static_cast<double>(kDwKernel);
  for (double& v : kernel.data()) v = rng.uniform(-bound, bound);
  p.dw_kernel = parameter(std::move(kernel));
  for (std::size_t k = 0; k < (per_direction ? kDirections : 1); ++k) p.ssm.push_back(init_ssm_params(D, N, R, rng));
  p.norm2_gamma = parameter(Tensor(Shape{D}, 1.0));
  p.norm2_beta = parameter(Tensor(Shape{D}));
  p.w_out = parameter(fan_in_uniform(D, D, rng));
  p.b_out = parameter(Tensor(Shape{D}));
  return p;
}

inline Var vssm_forward(const Var& tokens, const VssmBlockParams& p, BbarMode mode = BbarMode::zoh_full) {
  if (tokens.shape().size() != 3) throw DimensionError("vssm_forward: expected [gh,gw,D], got " + shape_string(tokens.shape()));
  const std::size_t gh = tokens.dim(0), gw = tokens.dim(1);
  const Var u = layer_norm(tokens, p.norm1_gamma, p.norm1_beta);
  const Var main = silu(depthwise_conv2d(linear(u, p.w_in, p.b_in), p.dw_kernel));
  const Var seqs = unfold_directions(main);
  Var scanned;
  if (p.ssm.size() == 1) {
    scanned = selective_scan(seqs, p.ssm.front(), mode);
  } else {
    std::vector<Var> per_dir;
    for (std::size_t k = 0; k < kDirections; ++k) {
      const Var one = select0(seqs, k);
      const Var batched = stack0({one});
      per_dir.push_back(select0(selective_scan(batched, p.ssm[k], mode), 0));
    }
    scanned = stack0(per_dir);
  }
  const Var s = layer_norm(fold_merge(scanned, gh, gw), p.norm2_gamma, p.norm2_beta);
  const Var gate = silu(linear(u, p.w_gate, p.b_gate));
  return add(linear(mul(s, gate), p.w_out, p.b_out), tokens);
}

}  // namespace mambarecon
