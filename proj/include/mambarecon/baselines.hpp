#pragma once

// Classical Tikhonov-regularized reconstruction:
//   x* = argmin ||E x - y||^2 + lambda ||x||^2,  E = encode
// solved through the normal equations (E^H E + lambda I) x = E^H y.

#include <cmath>
#include <vector>

#include "mambarecon/forward_model.hpp"

namespace mambarecon {

struct CgConfig {
  double lambda = 1e-3;
  std::size_t max_iters = 100;
  double tol = 1e-10;  ///< stop once ||r_k|| <= tol * ||E^H y||

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("cg: lambda must be >= 0");
    if (max_iters == 0) throw ConfigError("cg: max_iters must be >= 1");
    if (!(tol >= 0.0)) throw ConfigError("cg: tol must be >= 0");
  }
};

struct CgResult {
  ComplexImage image;
  std::vector<double> residual_norms;  ///< ||b - A x_k|| for k = 0 .. iterations
  std::size_t iterations = 0;
  bool converged = false;
};

/// (E^H E + lambda I) x.
inline ComplexImage normal_apply(const ComplexImage& x, const CoilMaps& coils, const Mask& mask, double lambda) {
  ComplexImage out = zero_filled(encode(x, coils, mask), coils, mask);
  const auto src = x.tensor().data();
  auto dst = out.tensor().data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += lambda * src[i];
  return out;
}

namespace detail {

// Real inner product on the 2-channel layout; A is self-adjoint under it.
inline double dot(const ComplexImage& a, const ComplexImage& b) {
  const auto x = a.tensor().data(), y = b.tensor().data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline void axpy(ComplexImage& y, double a, const ComplexImage& x) {
  auto dst = y.tensor().data();
  const auto src = x.tensor().data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

inline void xpby(ComplexImage& p, const ComplexImage& r, double b) {
  auto dst = p.tensor().data();
  const auto src = r.tensor().data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] + b * dst[i];
}

}  // namespace detail

/// Krylov solve of the normal equations from x_0 = 0 using the conjugate
/// residual recurrence, which minimizes ||b - A x_k|| over the k-th Krylov
/// space; the residual sequence is therefore nonincreasing. On hitting
/// max_iters the last (lowest-residual) iterate is returned with
/// converged == false.
inline CgResult cg_tikhonov(const KSpace& y, const CoilMaps& coils, const Mask& mask, const CgConfig& cfg) {
  cfg.validate();
  auto apply = [&](const ComplexImage& v) { return normal_apply(v, coils, mask, cfg.lambda); };
  const ComplexImage b = zero_filled(y, coils, mask);

  CgResult res;
  res.image = ComplexImage(b.height(), b.width());
  ComplexImage r = b;
  double rnorm = std::sqrt(detail::dot(r, r));
  const double threshold = cfg.tol * rnorm;
  res.residual_norms.push_back(rnorm);
  if (rnorm == 0.0) {
    res.converged = true;
    return res;
  }
  ComplexImage ar = apply(r);
  ComplexImage p = r, ap = ar;
  double rar = detail::dot(r, ar);
  while (res.iterations < cfg.max_iters) {
    const double apap = detail::dot(ap, ap);
    if (apap == 0.0) break;  // A p = 0 only when lambda = 0 and p lies in the null space
    const double alpha = rar / apap;
    detail::axpy(res.image, alpha, p);
    detail::axpy(r, -alpha, ap);
    ++res.iterations;
    rnorm = std::sqrt(detail::dot(r, r));
    res.residual_norms.push_back(rnorm);
    if (rnorm <= threshold) {
      res.converged = true;
      break;
    }
    ar = apply(r);
    const double rar_next = detail::dot(r, ar);
    if (rar == 0.0) break;
    const double beta = rar_next / rar;
    rar = rar_next;
    detail::xpby(p, r, beta);
    detail::xpby(ap, ar, beta);
  }
  return res;
}

}  // namespace mambarecon
