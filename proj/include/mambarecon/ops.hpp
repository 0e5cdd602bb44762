#pragma once

// Differentiable primitives used by the reconstruction network. Shapes follow
// a channels-last convention: images are [H,W,C], token grids [gh,gw,D],
// sequences [Bs,L,D]. Only the broadcasting each primitive documents is
// supported.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mambarecon/autodiff.hpp"

namespace mambarecon {

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, "add", [](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
    for (Tensor* t : pg)
      if (t) *t += g;
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(std::move(out), {a, b}, "sub", [](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
    if (pg[0]) *pg[0] += g;
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
  });
}

/// Elementwise product of equally shaped tensors.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(std::move(out), {a, b}, "mul", [](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * bv[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * av[i];
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return make_result(std::move(out), {a}, "scale", [s](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += s * g[i];
  });
}

/// Sum of all elements, as a scalar.
inline Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return make_result(scalar_tensor(acc), {a}, "sum", [](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
    for (double& v : pg[0]->data()) v += g[0];
  });
}

/// y = x * sigmoid(x).
inline Var silu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v * detail::sigmoid(v);
  return make_result(std::move(out), {x}, "silu", [](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
    const Tensor& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = detail::sigmoid(xv[i]);
      (*pg[0])[i] += g[i] * (s + xv[i] * s * (1.0 - s));
    }
  });
}

/// y = log(1 + exp(x)); derivative is sigmoid(x).
inline Var softplus(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = detail::softplus(v);
  return make_result(std::move(out), {x}, "softplus",
                     [](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       const Tensor& xv = self.parents[0]->value;
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * detail::sigmoid(xv[i]);
                     });
}

/// y = x W + b over the last axis of x. W is [Din,Dout]; `b` may be empty (no bias).
inline Var linear(const Var& x, const Var& w, const Var& b = Var()) {
  if (w.shape().size() != 2) throw DimensionError("linear: weight must be 2-D, got " + shape_string(w.shape()));
  const std::size_t din = w.dim(0), dout = w.dim(1);
  if (x.shape().empty() || x.shape().back() != din)
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  if (b && (b.shape().size() != 1 || b.dim(0) != dout))
    throw DimensionError("linear: bias " + shape_string(b.shape()) + " does not match output width " +
                         std::to_string(dout));
  const std::size_t rows = x.value().outer();
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  const double* xv = x.value().data().data();
  const double* wv = w.value().data().data();
  double* ov = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = ov + r * dout;
    if (b) std::copy_n(b.value().data().data(), dout, orow);
    const double* xrow = xv + r * din;
    for (std::size_t k = 0; k < din; ++k) {
      const double xk = xrow[k];
      if (xk == 0.0) continue;
      const double* wrow = wv + k * dout;
      for (std::size_t j = 0; j < dout; ++j) orow[j] += xk * wrow[j];
    }
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_result(std::move(out), std::move(parents), "linear",
                     [rows, din, dout](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       const double* xv = self.parents[0]->value.data().data();
                       const double* wv = self.parents[1]->value.data().data();
                       const double* gv = g.data().data();
                       if (pg[0]) {
                         double* gx = pg[0]->data().data();
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* grow = gv + r * dout;
                           for (std::size_t k = 0; k < din; ++k) {
                             const double* wrow = wv + k * dout;
                             double acc = 0.0;
                             for (std::size_t j = 0; j < dout; ++j) acc += grow[j] * wrow[j];
                             gx[r * din + k] += acc;
                           }
                         }
                       }
                       if (pg[1]) {
                         double* gw = pg[1]->data().data();
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* grow = gv + r * dout;
                           const double* xrow = xv + r * din;
                           for (std::size_t k = 0; k < din; ++k) {
                             const double xk = xrow[k];
                             if (xk == 0.0) continue;
                             double* gwrow = gw + k * dout;
                             for (std::size_t j = 0; j < dout; ++j) gwrow[j] += xk * grow[j];
                           }
                         }
                       }
                       if (pg.size() > 2 && pg[2]) {
                         double* gb = pg[2]->data().data();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < dout; ++j) gb[j] += gv[r * dout + j];
                       }
                     });
}

/// Per-channel 2-D cross-correlation with zero padding; x is [H,W,D], k is [kh,kw,D]
/// with odd kh, kw. Output keeps the spatial shape.
inline Var depthwise_conv2d(const Var& x, const Var& k) {
  if (x.shape().size() != 3 || k.shape().size() != 3 || x.dim(2) != k.dim(2))
    throw DimensionError("depthwise_conv2d: input " + shape_string(x.shape()) + " and kernel " +
                         shape_string(k.shape()) + " are incompatible");
  const std::size_t kh = k.dim(0), kw = k.dim(1);
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ConfigError("depthwise_conv2d: kernel extents must be odd, got " + shape_string(k.shape()));
  const long H = static_cast<long>(x.dim(0)), W = static_cast<long>(x.dim(1));
  const std::size_t D = x.dim(2);
  const long rh = static_cast<long>(kh / 2), rw = static_cast<long>(kw / 2);

  // Visits every (output pixel, tap) pair that lands inside the image.
  auto for_each_tap = [=](auto&& fn) {
    for (long i = 0; i < H; ++i)
      for (long j = 0; j < W; ++j)
        for (long a = 0; a < static_cast<long>(kh); ++a) {
          const long si = i + a - rh;
          if (si < 0 || si >= H) continue;
          for (long b = 0; b < static_cast<long>(kw); ++b) {
            const long sj = j + b - rw;
            if (sj < 0 || sj >= W) continue;
            fn(static_cast<std::size_t>(i * W + j) * D, static_cast<std::size_t>(si * W + sj) * D,
               static_cast<std::size_t>(a * static_cast<long>(kw) + b) * D);
          }
        }
  };

  Tensor out(x.shape());
  {
    const double* xv = x.value().data().data();
    const double* kv = k.value().data().data();
    double* ov = out.data().data();
    for_each_tap([&](std::size_t o, std::size_t s, std::size_t t) {
      for (std::size_t d = 0; d < D; ++d) ov[o + d] += xv[s + d] * kv[t + d];
    });
  }
  return make_result(std::move(out), {x, k}, "depthwise_conv2d",
                     [for_each_tap, D](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       const double* xv = self.parents[0]->value.data().data();
                       const double* kv = self.parents[1]->value.data().data();
                       const double* gv = g.data().data();
                       double* gx = pg[0] ? pg[0]->data().data() : nullptr;
                       double* gk = pg[1] ? pg[1]->data().data() : nullptr;
                       for_each_tap([&](std::size_t o, std::size_t s, std::size_t t) {
                         for (std::size_t d = 0; d < D; ++d) {
                           if (gx) gx[s + d] += gv[o + d] * kv[t + d];
                           if (gk) gk[t + d] += gv[o + d] * xv[s + d];
                         }
                       });
                     });
}

/// Normalize over the last axis to zero mean / unit variance, then scale by
/// gamma and shift by beta (both [D]).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const std::size_t D = x.value().inner();
  if (gamma.shape() != Shape{D} || beta.shape() != Shape{D})
    throw DimensionError("layer_norm: gamma/beta must be [" + std::to_string(D) + "]");
  const std::size_t rows = x.value().outer();
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std(Shape{rows});
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * D;
    double mean = 0.0;
    for (std::size_t d = 0; d < D; ++d) mean += xv[o + d];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) var += (xv[o + d] - mean) * (xv[o + d] - mean);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t d = 0; d < D; ++d) {
      xhat[o + d] = (xv[o + d] - mean) * is;
      out[o + d] = xhat[o + d] * gv[d] + bv[d];
    }
  }
  std::vector<Tensor> saved;
  saved.push_back(std::move(xhat));
  saved.push_back(std::move(inv_std));
  return make_result(
      std::move(out), {x, gamma, beta}, "layer_norm",
      [rows, D](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& xhat = self.saved[0];
        const Tensor& inv_std = self.saved[1];
        const Tensor& gam = self.parents[1]->value;
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * D;
          if (pg[0]) {
            double mean_gy = 0.0, mean_gy_xhat = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
              const double gy = g[o + d] * gam[d];
              mean_gy += gy;
              mean_gy_xhat += gy * xhat[o + d];
            }
            mean_gy /= static_cast<double>(D);
            mean_gy_xhat /= static_cast<double>(D);
            for (std::size_t d = 0; d < D; ++d) {
              const double gy = g[o + d] * gam[d];
              (*pg[0])[o + d] += inv_std[r] * (gy - mean_gy - xhat[o + d] * mean_gy_xhat);
            }
          }
          for (std::size_t d = 0; d < D; ++d) {
            if (pg[1]) (*pg[1])[d] += g[o + d] * xhat[o + d];
            if (pg[2]) (*pg[2])[d] += g[o + d];
          }
        }
      },
      std::move(saved));
}

/// Regroup [H,W,C] into non-overlapping p x p patches: [H/p, W/p, p*p*C], with
/// patch features ordered (row-in-patch, col-in-patch, channel).
inline Var space_to_depth(const Var& x, std::size_t p) {
  if (x.shape().size() != 3) throw DimensionError("space_to_depth: expected [H,W,C], got " + shape_string(x.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (p == 0 || H % p != 0 || W % p != 0)
    throw ConfigError("space_to_depth: image " + std::to_string(H) + "x" + std::to_string(W) +
                      " is not divisible by patch size " + std::to_string(p));
  const std::size_t gh = H / p, gw = W / p, F = p * p * C;
  auto src_index = [=](std::size_t dst) {
    const std::size_t f = dst % F, tok = dst / F;
    const std::size_t ti = tok / gw, tj = tok % gw;
    const std::size_t c = f % C, dx = (f / C) % p, dy = f / (C * p);
    return ((ti * p + dy) * W + (tj * p + dx)) * C + c;
  };
  Tensor out(Shape{gh, gw, F});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[src_index(i)];
  return make_result(std::move(out), {x}, "space_to_depth",
                     [src_index](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[src_index(i)] += g[i];
                     });
}

/// Inverse of space_to_depth: [gh,gw,p*p*C] -> [gh*p, gw*p, C].
inline Var depth_to_space(const Var& t, std::size_t p, std::size_t channels) {
  if (t.shape().size() != 3 || p == 0 || t.dim(2) != p * p * channels)
    throw DimensionError("depth_to_space: grid " + shape_string(t.shape()) + " cannot hold " +
                         std::to_string(p) + "x" + std::to_string(p) + "x" + std::to_string(channels) + " patches");
  const std::size_t gh = t.dim(0), gw = t.dim(1), C = channels, F = p * p * C;
  const std::size_t W = gw * p;
  // dst pixel -> src token feature
  auto src_index = [=](std::size_t dst) {
    const std::size_t c = dst % C, pix = dst / C;
    const std::size_t i = pix / W, j = pix % W;
    const std::size_t ti = i / p, dy = i % p, tj = j / p, dx = j % p;
    return (ti * gw + tj) * F + (dy * p + dx) * C + c;
  };
  Tensor out(Shape{gh * p, W, C});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.value()[src_index(i)];
  return make_result(std::move(out), {t}, "depth_to_space",
                     [src_index](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[src_index(i)] += g[i];
                     });
}

/// Slice `index` along the leading axis.
inline Var select0(const Var& x, std::size_t index) {
  if (x.shape().empty() || index >= x.dim(0))
    throw DimensionError("select0: index " + std::to_string(index) + " out of range for " + shape_string(x.shape()));
  const std::size_t stride = x.size() / x.dim(0);
  Shape shape(x.shape().begin() + 1, x.shape().end());
  std::vector<double> data(x.value().data().begin() + static_cast<long>(index * stride),
                           x.value().data().begin() + static_cast<long>((index + 1) * stride));
  return make_result(Tensor(std::move(shape), std::move(data)), {x}, "select0",
                     [index, stride](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       for (std::size_t i = 0; i < stride; ++i) (*pg[0])[index * stride + i] += g[i];
                     });
}

/// Stack equally shaped tensors along a new leading axis.
inline Var stack0(const std::vector<Var>& xs) {
  if (xs.empty()) throw DimensionError("stack0: nothing to stack");
  for (const auto& x : xs) detail::require_same_shape(xs.front(), x, "stack0");
  Shape shape{xs.size()};
  shape.insert(shape.end(), xs.front().shape().begin(), xs.front().shape().end());
  const std::size_t stride = xs.front().size();
  Tensor out(shape);
  for (std::size_t i = 0; i < xs.size(); ++i)
    std::copy(xs[i].value().data().begin(), xs[i].value().data().end(), out.data().begin() + static_cast<long>(i * stride));
  return make_result(std::move(out), xs, "stack0", [stride](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
    for (std::size_t i = 0; i < pg.size(); ++i)
      if (pg[i])
        for (std::size_t j = 0; j < stride; ++j) (*pg[i])[j] += g[i * stride + j];
  });
}

/// Mean absolute difference over all elements; subgradient 0 at ties.
inline Var mean_abs_diff(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mean_abs_diff");
  const auto& av = a.value();
  const auto& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  return make_result(scalar_tensor(acc / n), {a, b}, "mean_abs_diff",
                     [n](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       const Tensor& av = self.parents[0]->value;
                       const Tensor& bv = self.parents[1]->value;
                       for (std::size_t i = 0; i < av.size(); ++i) {
                         const double diff = av[i] - bv[i];
                         const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                         if (pg[0]) (*pg[0])[i] += g[0] * s / n;
                         if (pg[1]) (*pg[1])[i] -= g[0] * s / n;
                       }
                     });
}

}  // namespace mambarecon
