#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace mambarecon;

namespace {

double coil_energy_error(const CoilMaps& c) {
  double worst = 0.0;
  for (std::size_t p = 0; p < c.maps.front().pixels(); ++p) {
    double e = 0.0;
    for (const auto& m : c.maps) e += std::norm(m.pixel(p));
    worst = std::max(worst, std::abs(e - 1.0));
  }
  return worst;
}

KSpace random_kspace(std::size_t n, std::size_t h, std::size_t w, const Mask& m, Rng& rng) {
  KSpace y;
  for (std::size_t c = 0; c < n; ++c) y.coils.push_back(detail::masked(oracle::random_image(h, w, rng), m));
  return y;
}

}  // namespace

TEST(Mask, ExactCountAndCalibration) {
  const Mask m = generate_gaussian_mask(64, 64, 4.0, 7);
  EXPECT_EQ(m.sampled(), 1024u);
  for (std::size_t i = 28; i < 36; ++i)
    for (std::size_t j = 28; j < 36; ++j) EXPECT_EQ(m.grid[i * 64 + j], 1.0);
  for (double v : m.grid.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  EXPECT_EQ(generate_gaussian_mask(64, 64, 8.0, 3).sampled(), 512u);
  EXPECT_EQ(generate_gaussian_mask(32, 16, 3.0, 3).sampled(), 170u);
}

TEST(Mask, Deterministic) {
  EXPECT_EQ(generate_gaussian_mask(32, 32, 4.0, 11).grid, generate_gaussian_mask(32, 32, 4.0, 11).grid);
  EXPECT_NE(generate_gaussian_mask(32, 32, 4.0, 11).grid, generate_gaussian_mask(32, 32, 4.0, 12).grid);
}

TEST(Mask, InfeasibleIsConfigError) {
  EXPECT_THROW(generate_gaussian_mask(16, 16, 8.0, 1, {8, 0.0}), ConfigError);  // 64 calib > 32 budget
  EXPECT_THROW(generate_gaussian_mask(16, 16, 0.5, 1), ConfigError);
}

TEST(Mask, RadialDensityDecreases) {
  const std::size_t n = 64;
  double inner = 0, outer = 0, inner_cells = 0, outer_cells = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Mask m = generate_gaussian_mask(n, n, 4.0, seed);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double r = std::hypot(static_cast<double>(i) - 32.0, static_cast<double>(j) - 32.0) / 32.0;
        if (r < 0.25) inner += m.grid[i * n + j], inner_cells += 1;
        if (r >= 0.75 && r < 1.0) outer += m.grid[i * n + j], outer_cells += 1;
      }
  }
  EXPECT_GT(inner / inner_cells, outer / outer_cells);
}

TEST(CoilMaps, SingleCoilIsOne) {
  const CoilMaps c = generate_coil_maps(16, 16, 1, 5);
  ASSERT_EQ(c.count(), 1u);
  for (std::size_t p = 0; p < 256; ++p) EXPECT_EQ(c.maps[0].pixel(p), cplx(1.0, 0.0));
}

TEST(CoilMaps, NormalizedEnergy) {
  for (std::size_t n : {2u, 4u, 8u}) EXPECT_LT(coil_energy_error(generate_coil_maps(32, 32, n, n)), 1e-10);
}

TEST(CoilMaps, Smooth) {
  // Documented bound for the default width: neighbouring pixels differ by < 0.15.
  const CoilMaps c = generate_coil_maps(64, 64, 4, 9);
  double worst = 0.0;
  for (const auto& m : c.maps)
    for (std::size_t i = 0; i + 1 < 64; ++i)
      for (std::size_t j = 0; j + 1 < 64; ++j) {
        worst = std::max(worst, std::abs(m.at(i + 1, j) - m.at(i, j)));
        worst = std::max(worst, std::abs(m.at(i, j + 1) - m.at(i, j)));
      }
  EXPECT_LT(worst, 0.15);
}

TEST(Encode, FullMaskSingleCoilIsFft) {
  Rng rng(1);
  const ComplexImage x = oracle::random_image(16, 16, rng);
  const KSpace y = encode(x, CoilMaps::single(16, 16), Mask::full(16, 16));
  EXPECT_EQ(y.coils[0], fft2c(x));
}

TEST(Encode, EmptyMaskIsZero) {
  Rng rng(2);
  const ComplexImage x = oracle::random_image(16, 16, rng);
  const KSpace y = encode(x, generate_coil_maps(16, 16, 3, 1), Mask::empty(16, 16));
  for (const auto& k : y.coils) EXPECT_EQ(oracle::max_abs(k.tensor()), 0.0);
}

TEST(Encode, TwoCoilDirectDftOracle) {
  Rng rng(3);
  const ComplexImage x = oracle::random_image(8, 8, rng);
  const CoilMaps coils = generate_coil_maps(8, 8, 2, 4);
  const Mask m = generate_gaussian_mask(8, 8, 2.0, 5, {2, 0.0});
  const KSpace y = encode(x, coils, m);
  for (std::size_t c = 0; c < 2; ++c) {
    ComplexImage cx(8, 8);
    for (std::size_t p = 0; p < 64; ++p) cx.set_pixel(p, coils.maps[c].pixel(p) * x.pixel(p));
    ComplexImage expect = oracle::direct_dft(cx, false);
    for (std::size_t p = 0; p < 64; ++p)
      if (m.grid[p] == 0.0) expect.set_pixel(p, 0.0);
    EXPECT_LT(oracle::max_abs_diff(y.coils[c].tensor(), expect.tensor()), 1e-10);
  }
}

TEST(ZeroFilled, FullMaskInvertsEncode) {
  Rng rng(4);
  const ComplexImage x = oracle::random_image(16, 16, rng);
  const CoilMaps coils = generate_coil_maps(16, 16, 4, 2);
  const Mask full = Mask::full(16, 16);
  EXPECT_LT(oracle::max_abs_diff(zero_filled(encode(x, coils, full), coils, full).tensor(), x.tensor()), 1e-10);
}

TEST(ZeroFilled, ZeroInZeroOut) {
  const CoilMaps coils = generate_coil_maps(8, 8, 2, 2);
  KSpace y{{ComplexImage(8, 8), ComplexImage(8, 8)}};
  EXPECT_EQ(zero_filled(y, coils, Mask::full(8, 8)), ComplexImage(8, 8));
}

TEST(ZeroFilled, AdjointDotProduct) {
  Rng rng(5);
  const CoilMaps coils = generate_coil_maps(16, 16, 3, 6);
  const Mask m = generate_gaussian_mask(16, 16, 4.0, 7, {4, 0.0});
  const ComplexImage x = oracle::random_image(16, 16, rng);
  const KSpace y = random_kspace(3, 16, 16, m, rng);
  const KSpace ex = encode(x, coils, m);
  cplx lhs = 0.0;
  for (std::size_t c = 0; c < 3; ++c) lhs += oracle::inner(ex.coils[c], y.coils[c]);
  const cplx rhs = oracle::inner(x, zero_filled(y, coils, m));
  EXPECT_LT(std::abs(lhs - rhs), 1e-10);
}

TEST(Encode, DimensionMismatch) {
  EXPECT_THROW(encode(ComplexImage(8, 8), CoilMaps::single(8, 8), Mask::full(4, 4)), DimensionError);
  EXPECT_THROW(encode(ComplexImage(8, 8), CoilMaps::single(4, 4), Mask::full(8, 8)), DimensionError);
}
