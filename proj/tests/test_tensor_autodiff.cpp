#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"

using namespace mambarecon;

namespace {

Var param(std::initializer_list<double> v, Shape s) { return parameter(Tensor(std::move(s), std::vector<double>(v))); }

}  // namespace

TEST(Tensor, RejectsMismatchedDataLength) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_EQ(Tensor(Shape{2, 3}).size(), 6u);
}

TEST(Silu, KnownValues) {
  const Var x = param({0.0, 10.0}, {2});
  const Var y = silu(x);
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_NEAR(y.value()[1], 10.0 / (1.0 + std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(y.value()[1], 9.99955, 5e-6);
  const Gradients g = backward(sum(y));
  EXPECT_DOUBLE_EQ(g.get(x)[0], 0.5);
}

TEST(Softplus, StableAndPositive) {
  const Var x = param({-50.0, 0.0, 50.0}, {3});
  const Var y = softplus(x);
  EXPECT_GT(y.value()[0], 0.0);
  EXPECT_NEAR(y.value()[1], std::log(2.0), 1e-15);
  EXPECT_NEAR(y.value()[2], 50.0, 1e-12);
}

TEST(Linear, IdentityAndBias) {
  Rng rng(1);
  const Var x = parameter(oracle::random_tensor({3, 2}, rng));
  const Var eye = constant(Tensor({2, 2}, {1, 0, 0, 1}));
  EXPECT_EQ(linear(x, eye).value(), x.value());
  const Var y = linear(constant(Tensor({1, 2}, {5, -7})), constant(Tensor({2, 2})), constant(Tensor({2}, {1, 2})));
  EXPECT_EQ(y.value(), Tensor({1, 2}, {1, 2}));
}

TEST(Linear, HandProduct) {
  const Var y = linear(constant(Tensor({2}, {1, 2})), constant(Tensor({2, 2}, {1, 0, 0, 3})));
  EXPECT_EQ(y.value(), Tensor({2}, {1, 6}));
}

TEST(Linear, ShapeMismatchThrows) {
  EXPECT_THROW(linear(constant(Tensor({2, 3})), constant(Tensor({2, 2}))), DimensionError);
}

TEST(DepthwiseConv, OneByOneOnesIsIdentity) {
  Rng rng(2);
  const Var x = constant(oracle::random_tensor({5, 5, 3}, rng));
  EXPECT_EQ(depthwise_conv2d(x, constant(Tensor({1, 1, 3}, 1.0))).value(), x.value());
  EXPECT_EQ(depthwise_conv2d(x, constant(Tensor({3, 3, 3}))).value(), Tensor({5, 5, 3}));
}

TEST(DepthwiseConv, EvenKernelIsConfigError) {
  EXPECT_THROW(depthwise_conv2d(constant(Tensor({4, 4, 1})), constant(Tensor({2, 2, 1}))), ConfigError);
}

TEST(DepthwiseConv, MatchesLoopOracle) {
  Rng rng(3);
  const std::size_t H = 5, W = 5, D = 2;
  const Tensor x = oracle::random_tensor({H, W, D}, rng), k = oracle::random_tensor({3, 3, D}, rng);
  const Tensor y = depthwise_conv2d(constant(x), constant(k)).value();
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (int a = -1; a <= 1; ++a)
          for (int b = -1; b <= 1; ++b) {
            const long ii = static_cast<long>(i) + a, jj = static_cast<long>(j) + b;
            if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) continue;
            acc += k[((a + 1) * 3 + (b + 1)) * D + d] * x[(static_cast<std::size_t>(ii) * W + static_cast<std::size_t>(jj)) * D + d];
          }
        EXPECT_NEAR(y[(i * W + j) * D + d], acc, 1e-12);
      }
}

TEST(LayerNorm, ConstantRowGivesBeta) {
  const Var y = layer_norm(constant(Tensor({2, 3}, 4.0)), constant(Tensor({3}, 2.0)), constant(Tensor({3}, {1, 2, 3})));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_DOUBLE_EQ(y.value()[r * 3 + d], static_cast<double>(d + 1));
}

TEST(LayerNorm, UnitGammaNormalizesRows) {
  Rng rng(4);
  const Var y = layer_norm(constant(oracle::random_tensor({6, 16}, rng, -5, 5)), constant(Tensor({16}, 1.0)),
                           constant(Tensor({16})), 0.0);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0, v = 0;
    for (std::size_t d = 0; d < 16; ++d) m += y.value()[r * 16 + d] / 16;
    for (std::size_t d = 0; d < 16; ++d) v += std::pow(y.value()[r * 16 + d] - m, 2) / 16;
    EXPECT_NEAR(m, 0.0, 1e-10);
    EXPECT_NEAR(v, 1.0, 1e-10);
  }
}

TEST(LayerNorm, FourVectorByHand) {
  const double x[4] = {0.3, -1.2, 2.5, 0.9}, g[4] = {1.5, -0.5, 2.0, 1.0}, b[4] = {0.1, 0.2, -0.3, 0.0};
  const double eps = 1e-5;
  const Var y = layer_norm(constant(Tensor({4}, {x[0], x[1], x[2], x[3]})), constant(Tensor({4}, {g[0], g[1], g[2], g[3]})),
                           constant(Tensor({4}, {b[0], b[1], b[2], b[3]})), eps);
  const double mean = (x[0] + x[1] + x[2] + x[3]) / 4;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean) / 4;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.value()[i], g[i] * (x[i] - mean) / std::sqrt(var + eps) + b[i], 1e-12);
}

TEST(Backward, SumGivesOnes) {
  Rng rng(5);
  const Var x = parameter(oracle::random_tensor({3, 4}, rng));
  EXPECT_EQ(backward(sum(x)).get(x), Tensor({3, 4}, 1.0));
}

TEST(Backward, LinearWeightGradientIsColumnSums) {
  Rng rng(6);
  const Var x = constant(oracle::random_tensor({5, 3}, rng));
  const Var w = parameter(oracle::random_tensor({3, 2}, rng));
  const Tensor gw = backward(sum(linear(x, w))).get(w);
  for (std::size_t i = 0; i < 3; ++i) {
    double col = 0;
    for (std::size_t r = 0; r < 5; ++r) col += x.value()[r * 3 + i];
    EXPECT_NEAR(gw[i * 2], col, 1e-14);
    EXPECT_NEAR(gw[i * 2 + 1], col, 1e-14);
  }
}

TEST(Backward, NonScalarLossIsContractError) {
  EXPECT_THROW(backward(parameter(Tensor({2}))), ContractError);
}

TEST(Backward, FanOutAccumulates) {
  const Var x = param({3.0}, {1});
  const Var y = add(mul(x, x), x);  // x^2 + x
  EXPECT_DOUBLE_EQ(backward(sum(y)).get(x)[0], 7.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  const Var x = param({1.0}, {1});
  NoGradGuard guard;
  EXPECT_FALSE(silu(x).requires_grad());
}

TEST(MeanAbsDiff, SignSubgradientZeroAtTies) {
  const Var a = param({1.0, 2.0, 3.0}, {3});
  const Var b = constant(Tensor({3}, {0.0, 2.0, 5.0}));
  const Var l = mean_abs_diff(a, b);
  EXPECT_DOUBLE_EQ(l.value()[0], 1.0);
  EXPECT_EQ(backward(l).get(a), Tensor({3}, {1.0 / 3, 0.0, -1.0 / 3}));
}

TEST(SpaceToDepth, RoundTrip) {
  Rng rng(7);
  const Var x = constant(oracle::random_tensor({4, 6, 2}, rng));
  const Var t = space_to_depth(x, 2);
  EXPECT_EQ(t.shape(), (Shape{2, 3, 8}));
  EXPECT_EQ(depth_to_space(t, 2, 2).value(), x.value());
}

// ---------------------------------------------------------------------------
// finite-difference checks, shapes <= 16 per axis

TEST(GradCheck, ElementwisePrimitives) {
  Rng rng(10);
  const Var a = parameter(oracle::random_tensor({4, 5}, rng, -3, 3));
  const Var b = parameter(oracle::random_tensor({4, 5}, rng, -3, 3));
  auto f = [&] { return oracle::random_projection(add(mul(silu(a), softplus(b)), scale(sub(a, b), 0.7)), 99); };
  EXPECT_LT(oracle::gradient_check(f, {a, b}).max_rel_error, 1e-4);
}

TEST(GradCheck, Linear) {
  Rng rng(11);
  const Var x = parameter(oracle::random_tensor({3, 4, 5}, rng));
  const Var w = parameter(oracle::random_tensor({5, 6}, rng));
  const Var b = parameter(oracle::random_tensor({6}, rng));
  auto f = [&] { return oracle::random_projection(linear(x, w, b), 1); };
  EXPECT_LT(oracle::gradient_check(f, {x, w, b}).max_rel_error, 1e-4);
}

TEST(GradCheck, DepthwiseConv) {
  Rng rng(12);
  const Var x = parameter(oracle::random_tensor({6, 5, 3}, rng));
  const Var k = parameter(oracle::random_tensor({3, 3, 3}, rng));
  auto f = [&] { return oracle::random_projection(depthwise_conv2d(x, k), 2); };
  EXPECT_LT(oracle::gradient_check(f, {x, k}).max_rel_error, 1e-4);
}

TEST(GradCheck, LayerNorm) {
  Rng rng(13);
  const Var x = parameter(oracle::random_tensor({5, 8}, rng, -2, 2));
  const Var g = parameter(oracle::random_tensor({8}, rng));
  const Var b = parameter(oracle::random_tensor({8}, rng));
  auto f = [&] { return oracle::random_projection(layer_norm(x, g, b), 3); };
  EXPECT_LT(oracle::gradient_check(f, {x, g, b}).max_rel_error, 1e-4);
}

TEST(GradCheck, Rearrangements) {
  Rng rng(14);
  const Var x = parameter(oracle::random_tensor({4, 4, 2}, rng));
  auto f = [&] {
    const Var t = space_to_depth(x, 2);
    const Var s = stack0({select0(stack0({t, t}), 1), t});
    return oracle::random_projection(depth_to_space(select0(s, 0), 2, 2), 4);
  };
  EXPECT_LT(oracle::gradient_check(f, {x}).max_rel_error, 1e-4);
}

TEST(GradCheck, MeanAbsDiff) {
  Rng rng(15);
  const Var a = parameter(oracle::random_tensor({3, 3, 2}, rng));
  const Var b = constant(oracle::random_tensor({3, 3, 2}, rng));
  auto f = [&] { return mean_abs_diff(a, b); };
  EXPECT_LT(oracle::gradient_check(f, {a}).max_rel_error, 1e-4);
}

TEST(Adjoint, LinearBackwardIsTranspose) {
  Rng rng(16);
  const Tensor w = oracle::random_tensor({4, 3}, rng);
  const Var x = parameter(oracle::random_tensor({4}, rng));
  const Tensor y = oracle::random_tensor({3}, rng);
  const Var ax = linear(x, constant(w));
  double lhs = 0;
  for (std::size_t i = 0; i < 3; ++i) lhs += ax.value()[i] * y[i];
  const Tensor aty = backward(sum(mul(ax, constant(y)))).get(x);
  double rhs = 0;
  for (std::size_t i = 0; i < 4; ++i) rhs += x.value()[i] * aty[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Determinism, SameSeedSameValues) {
  auto run = [] {
    Rng rng(17);
    const Var x = parameter(oracle::random_tensor({8, 8}, rng));
    return backward(sum(silu(linear(x, constant(oracle::random_tensor({8, 8}, rng)))))).get(x);
  };
  EXPECT_EQ(run(), run());
}
