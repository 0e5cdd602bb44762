#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace mambarecon;

namespace {

double norm(const ComplexImage& x) {
  double s = 0.0;
  for (double v : x.tensor().data()) s += v * v;
  return std::sqrt(s);
}

KSpace measure(const ComplexImage& x, const CoilMaps& coils, const Mask& mask) { return encode(x, coils, mask); }

// Dense (E^H E + lambda I) for a single unit coil, built column by column
// from the direct DFT, then solved by partial-pivot Gaussian elimination.
std::vector<double> dense_solve(const Mask& mask, double lambda, const ComplexImage& rhs) {
  const std::size_t h = mask.height(), w = mask.width(), n = 2 * h * w;
  std::vector<double> a(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    ComplexImage e(h, w);
    e.tensor().data()[j] = 1.0;
    ComplexImage k = oracle::direct_dft(e, false);
    for (std::size_t p = 0; p < k.pixels(); ++p) k.set_pixel(p, k.pixel(p) * mask.grid[p]);
    const ComplexImage col = oracle::direct_dft(k, true);
    for (std::size_t i = 0; i < n; ++i) a[i * n + j] = col.tensor().data()[i] + (i == j ? lambda : 0.0);
  }
  std::vector<double> b(rhs.tensor().data().begin(), rhs.tensor().data().end());
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= a[c * n + k] * x[k];
    x[c] = s / a[c * n + c];
  }
  return x;
}

}  // namespace

TEST(Cg, HugeLambdaShrinksToZero) {
  Rng rng(1);
  const CoilMaps coils = generate_coil_maps(16, 16, 4, 2);
  const Mask mask = generate_gaussian_mask(16, 16, 4.0, 3);
  const KSpace y = measure(oracle::random_image(16, 16, rng), coils, mask);
  const double rhs = norm(zero_filled(y, coils, mask));
  CgConfig cfg;
  cfg.lambda = 1e9;
  const CgResult r = cg_tikhonov(y, coils, mask, cfg);
  EXPECT_LT(norm(r.image), 1e-6 * rhs);
}

TEST(Cg, FullMaskWithoutRegularizationRecoversImage) {
  Rng rng(4);
  const CoilMaps coils = generate_coil_maps(16, 16, 3, 5);
  const ComplexImage x = oracle::random_image(16, 16, rng);
  const Mask full = Mask::full(16, 16);
  CgConfig cfg;
  cfg.lambda = 0.0;
  const CgResult r = cg_tikhonov(measure(x, coils, full), coils, full, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(oracle::max_abs_diff(r.image.tensor(), x.tensor()), 1e-8);
}

// One unit coil: E^H E is the projection F^H M F, so the solution is x_us / (1 + lambda).
TEST(Cg, SingleCoilIsScaledZeroFilled) {
  Rng rng(12);
  const CoilMaps coils = CoilMaps::single(16, 16);
  const Mask mask = generate_gaussian_mask(16, 16, 4.0, 8);
  const KSpace y = measure(oracle::random_image(16, 16, rng), coils, mask);
  CgConfig cfg;
  cfg.lambda = 0.1;
  const CgResult r = cg_tikhonov(y, coils, mask, cfg);
  Tensor expect = zero_filled(y, coils, mask).tensor();
  for (double& v : expect.data()) v /= 1.1;
  EXPECT_TRUE(r.converged);
  EXPECT_LT(oracle::max_abs_diff(r.image.tensor(), expect), 1e-10);
}

TEST(Cg, MatchesDenseDirectSolve) {
  Rng rng(6);
  const CoilMaps coils = CoilMaps::single(8, 8);
  const Mask mask = generate_gaussian_mask(8, 8, 3.0, 7, {2, 0.0});
  const KSpace y = measure(oracle::random_image(8, 8, rng), coils, mask);
  CgConfig cfg;
  cfg.lambda = 1e-2;
  cfg.max_iters = 500;
  cfg.tol = 1e-14;
  const CgResult r = cg_tikhonov(y, coils, mask, cfg);
  const std::vector<double> ref = dense_solve(mask, cfg.lambda, zero_filled(y, coils, mask));
  const auto got = r.image.tensor().data();
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));
  EXPECT_LT(worst, 1e-8);
}

TEST(Cg, ResidualNormsNeverIncrease) {
  Rng rng(8);
  const CoilMaps coils = generate_coil_maps(32, 32, 4, 9);
  const Mask mask = generate_gaussian_mask(32, 32, 4.0, 10);
  const KSpace y = measure(oracle::random_image(32, 32, rng), coils, mask);
  CgConfig cfg;
  cfg.lambda = 1e-4;
  cfg.max_iters = 60;
  cfg.tol = 0.0;
  const CgResult r = cg_tikhonov(y, coils, mask, cfg);
  ASSERT_EQ(r.residual_norms.size(), r.iterations + 1);
  for (std::size_t k = 1; k < r.residual_norms.size(); ++k)
    EXPECT_LE(r.residual_norms[k], r.residual_norms[k - 1] * (1.0 + 1e-12)) << "iteration " << k;
}

TEST(Cg, DataFitImprovesAsLambdaShrinks) {
  Rng rng(11);
  const CoilMaps coils = generate_coil_maps(16, 16, 2, 12);
  const Mask mask = generate_gaussian_mask(16, 16, 4.0, 13);
  const KSpace y = measure(oracle::random_image(16, 16, rng), coils, mask);
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {1.0, 1e-1, 1e-2, 1e-3}) {
    CgConfig cfg;
    cfg.lambda = lambda;
    cfg.max_iters = 300;
    cfg.tol = 1e-13;
    const KSpace fit = measure(cg_tikhonov(y, coils, mask, cfg).image, coils, mask);
    double err = 0.0;
    for (std::size_t c = 0; c < y.coils.size(); ++c) {
      const auto a = fit.coils[c].tensor().data(), b = y.coils[c].tensor().data();
      for (std::size_t i = 0; i < a.size(); ++i) err += (a[i] - b[i]) * (a[i] - b[i]);
    }
    EXPECT_LT(err, previous) << "lambda " << lambda;
    previous = err;
  }
}

TEST(Cg, ZeroMeasurementsConvergeImmediately) {
  const CoilMaps coils = CoilMaps::single(8, 8);
  const Mask mask = generate_gaussian_mask(8, 8, 2.0, 1, {2, 0.0});
  const CgResult r = cg_tikhonov(measure(ComplexImage(8, 8), coils, mask), coils, mask, {});
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(norm(r.image), 0.0);
}

TEST(Cg, RejectsInvalidSettings) {
  CgConfig cfg;
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.tol = std::nan("");
  EXPECT_THROW(cfg.validate(), ConfigError);
}
