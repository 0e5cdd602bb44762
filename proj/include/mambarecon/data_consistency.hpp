#pragma once

// Hard data consistency between network stages. With U = unpatchify and
// P = patch embedding of one block:
//
//   k_c  = fft2c(C_c U(x_p)) (1 - M) + fft2c(C_c x_us) M
//   x_dc = sum_c conj(C_c) ifft2c(k_c)
//   out  = P(SiLU(x_dc))       (SiLU on the real and imaginary channels)

#include <vector>

#include "mambarecon/forward_model.hpp"
#include "mambarecon/vssm.hpp"

namespace mambarecon {

struct DcBlockParams {
  Var unpatch_w, unpatch_b;  ///< [D,2p^2], [2p^2]
  Var embed_w, embed_b;      ///< [2p^2,D], [D]

  std::vector<Var> all() const { return {unpatch_w, unpatch_b, embed_w, embed_b}; }
};

inline std::size_t dc_param_count(std::size_t D, std::size_t p) {
  const std::size_t f = 2 * p * p;
  return (D * f + f) + (f * D + D);
}

inline DcBlockParams init_dc_params(std::size_t D, std::size_t p, Rng& rng) {
  const std::size_t f = 2 * p * p;
  return {parameter(fan_in_uniform(D, f, rng)), parameter(Tensor(Shape{f})), parameter(fan_in_uniform(f, D, rng)),
          parameter(Tensor(Shape{D}))};
}

/// Tensor of 1 - M, [H,W].
inline Tensor complement(const Tensor& mask) {
  Tensor out(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = 1.0 - mask[i];
  return out;
}

namespace detail {

inline void require_dc_dims(const Var& x, const Var& x_us, const CoilMaps& coils, const Mask& mask) {
  const Shape expected{mask.height(), mask.width(), 2};
  if (x.shape() != expected || x_us.shape() != expected)
    throw DimensionError("data consistency: images " + shape_string(x.shape()) + " / " + shape_string(x_us.shape()) +
                         " do not match mask " + shape_string(mask.grid.shape()));
  if (coils.maps.empty() || coils.height() != mask.height() || coils.width() != mask.width())
    throw DimensionError("data consistency: coil maps do not match the mask");
}

}  // namespace detail

/// Per-coil k-space after replacement, before the coil combine.
inline std::vector<Var> consistent_kspace(const Var& x, const Var& x_us, const CoilMaps& coils, const Mask& mask) {
  detail::require_dc_dims(x, x_us, coils, mask);
  const Tensor keep = complement(mask.grid);
  std::vector<Var> out;
  out.reserve(coils.count());
  for (const auto& map : coils.maps) {
    const Var predicted = mask_multiply(fft2c(complex_multiply(x, map)), keep);
    const Var acquired = mask_multiply(fft2c(complex_multiply(x_us, map)), mask.grid);
    out.push_back(add(predicted, acquired));
  }
  return out;
}

/// x_dc for an image-domain estimate x: predicted k-space outside the mask,
/// re-encoded x_us on it, combined with the adjoint coil operator.
inline Var hard_consistency_project(const Var& x, const Var& x_us, const CoilMaps& coils, const Mask& mask) {
  const std::vector<Var> kspace = consistent_kspace(x, x_us, coils, mask);
  Var combined;
  for (std::size_t c = 0; c < coils.count(); ++c) {
    const Var img = complex_multiply(ifft2c(kspace[c]), coils.maps[c], /*conjugate=*/true);
    combined = combined ? add(combined, img) : img;
  }
  return combined;
}

inline ComplexImage hard_consistency_project(const ComplexImage& x, const ComplexImage& x_us, const CoilMaps& coils,
                                             const Mask& mask) {
  return ComplexImage(hard_consistency_project(constant(x.tensor()), constant(x_us.tensor()), coils, mask).value());
}

/// One data-consistency block on a token grid.
inline Var dc_apply(const Var& tokens, const Var& x_us, const CoilMaps& coils, const Mask& mask,
                    const DcBlockParams& params, std::size_t patch) {
  const Var image = unpatchify(tokens, patch, params.unpatch_w, params.unpatch_b);
  const Var x_dc = hard_consistency_project(image, x_us, coils, mask);
  return patch_embed(silu(x_dc), patch, params.embed_w, params.embed_b);
}

}  // namespace mambarecon
