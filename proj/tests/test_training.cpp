#include <gtest/gtest.h>

#include <sstream>

#include "support/oracles.hpp"

using namespace mambarecon;

namespace {

RunConfig tiny_run() {
  RunConfig cfg;
  cfg.net.depth = 1;
  cfg.net.hidden_dim = 8;
  cfg.net.state_dim = 2;
  cfg.net.height = cfg.net.width = cfg.data.phantom.size = 16;
  cfg.data.n_train = 6;
  cfg.data.n_val = 1;
  cfg.data.n_test = 2;
  cfg.data.calib = 4;
  cfg.train.iters = 12;
  cfg.train.batch = 2;
  cfg.train.seed = 3;
  return cfg;
}

std::vector<double> losses(const TrainState& s) {
  std::vector<double> out;
  for (const auto& r : s.log) out.push_back(r.loss);
  return out;
}

}  // namespace

TEST(L1Loss, Values) {
  Rng rng(1);
  const ComplexImage a = oracle::random_image(8, 8, rng);
  EXPECT_EQ(l1_loss(a, a), 0.0);
  ComplexImage b = a;
  for (double& v : b.tensor().data()) v += 0.5;
  EXPECT_NEAR(l1_loss(b, a), 0.5, 1e-15);
}

TEST(L1Loss, LoopOracle) {
  Rng rng(2);
  const ComplexImage a = oracle::random_image(8, 4, rng), b = oracle::random_image(8, 4, rng);
  double acc = 0.0;
  for (std::size_t p = 0; p < a.pixels(); ++p)
    acc += std::abs(a.pixel(p).real() - b.pixel(p).real()) + std::abs(a.pixel(p).imag() - b.pixel(p).imag());
  EXPECT_NEAR(l1_loss(a, b), acc / (2.0 * static_cast<double>(a.pixels())), 1e-12);
}

TEST(L1Loss, DimensionMismatch) {
  EXPECT_THROW(l1_loss(ComplexImage(4, 4), ComplexImage(4, 8)), DimensionError);
}

TEST(LrSchedule, EndpointsAndMidpoint) {
  TrainConfig cfg;
  cfg.iters = 2000;
  cfg.warmup_iters = 100;
  EXPECT_DOUBLE_EQ(lr_schedule(0, cfg), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(50, cfg), 5e-4);
  EXPECT_NEAR(lr_schedule(100, cfg), 1e-3, 1e-18);
  EXPECT_NEAR(lr_schedule(2000, cfg), 1e-6, 1e-18);
  EXPECT_NEAR(lr_schedule(1050, cfg), 5.005e-4, 1e-15);
  EXPECT_THROW(lr_schedule(2001, cfg), ContractError);
}

TEST(LrSchedule, DefaultWarmupIsFivePercent) {
  TrainConfig cfg;
  cfg.iters = 2000;
  EXPECT_EQ(cfg.warmup(), 100u);
  EXPECT_NEAR(lr_schedule(100, cfg), 1e-3, 1e-18);
}

TEST(LrSchedule, StrictlyDecreasingAfterWarmup) {
  TrainConfig cfg;
  cfg.iters = 500;
  for (std::size_t s = cfg.warmup(); s < cfg.iters; ++s) ASSERT_GT(lr_schedule(s, cfg), lr_schedule(s + 1, cfg)) << s;
}

TEST(TrainConfig, Invariants) {
  TrainConfig cfg;
  cfg.lr_min = cfg.lr_max;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.iters = 10;
  cfg.warmup_iters = 10;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AdamW, ZeroGradientNoDecayIsNoOp) {
  std::vector<Var> params{parameter(Tensor({3}, {1.0, -2.0, 3.0}))};
  OptimState st = OptimState::zeros_like(params);
  const std::vector<Tensor> g{Tensor({3})};
  adamw_step(params, g, st, 1e-3, {0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(params[0].value(), Tensor({3}, {1.0, -2.0, 3.0}));
  EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientContractsGeometrically) {
  const double lr = 1e-2, wd = 0.1;
  std::vector<Var> params{parameter(Tensor({2}, {1.5, -4.0}))};
  OptimState st = OptimState::zeros_like(params);
  const std::vector<Tensor> g{Tensor({2})};
  double expect0 = 1.5, expect1 = -4.0;
  for (int k = 0; k < 5; ++k) {
    adamw_step(params, g, st, lr, {0.9, 0.999, 1e-8, wd});
    expect0 *= (1.0 - lr * wd);
    expect1 *= (1.0 - lr * wd);
    EXPECT_EQ(params[0].value()[0], expect0);
    EXPECT_EQ(params[0].value()[1], expect1);
  }
}

TEST(AdamW, ThreeStepHandTrace) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  const double lrs[3] = {1e-3, 5e-4, 2e-4}, grads[3] = {0.3, -1.2, 0.05};
  std::vector<Var> params{parameter(Tensor({1}, {0.7}))};
  OptimState st = OptimState::zeros_like(params);
  double theta = 0.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1], lr = lrs[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t)), vhat = v / (1 - std::pow(b2, t));
    theta = theta - lr * (mhat / (std::sqrt(vhat) + eps)) - lr * wd * theta;
    adamw_step(params, std::vector<Tensor>{Tensor({1}, {g})}, st, lr, {b1, b2, eps, wd});
    EXPECT_NEAR(params[0].value()[0], theta, 1e-12) << "step " << t;
  }
}

TEST(Train, ZeroIterationsKeepsInitialization) {
  RunConfig cfg = tiny_run();
  cfg.train.iters = 0;
  cfg.train.warmup_iters = 0;
  const auto data = make_split(cfg.data, Split::train);
  TrainState s = init_train_state(cfg.net, 5);
  train(s, data, cfg.net, cfg.train);
  const auto init = build(cfg.net, 5).all(), now = s.params.all();
  for (std::size_t i = 0; i < init.size(); ++i) EXPECT_EQ(init[i].value(), now[i].value());
}

TEST(Train, DeterministicLossLog) {
  const RunConfig cfg = tiny_run();
  const auto data = make_split(cfg.data, Split::train);
  TrainState a = init_train_state(cfg.net, cfg.train.seed), b = init_train_state(cfg.net, cfg.train.seed);
  train(a, data, cfg.net, cfg.train);
  train(b, data, cfg.net, cfg.train);
  EXPECT_EQ(losses(a), losses(b));
  EXPECT_EQ(a.log.size(), cfg.train.iters);
}

TEST(Train, ThreadedMatchesSingleThreaded) {
  RunConfig cfg = tiny_run();
  cfg.train.iters = 4;
  const auto data = make_split(cfg.data, Split::train);
  TrainState a = init_train_state(cfg.net, 1), b = init_train_state(cfg.net, 1);
  train(a, data, cfg.net, cfg.train);
  cfg.train.threads = 2;
  train(b, data, cfg.net, cfg.train);
  EXPECT_EQ(losses(a), losses(b));
  const auto pa = a.params.all(), pb = b.params.all();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].value(), pb[i].value()) << i;
}

TEST(Train, NonFiniteLossAborts) {
  const RunConfig cfg = tiny_run();
  auto data = make_split(cfg.data, Split::train);
  for (auto& s : data) s.x_fs.tensor()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainState s = init_train_state(cfg.net, 1);
  EXPECT_THROW(train(s, data, cfg.net, cfg.train), NumericError);
}

TEST(Train, EmptyDatasetRejected) {
  const RunConfig cfg = tiny_run();
  TrainState s = init_train_state(cfg.net, 1);
  EXPECT_THROW(train(s, {}, cfg.net, cfg.train), ConfigError);
}

TEST(Train, LossDecreasesOnSmallProblem) {
  RunConfig cfg = tiny_run();
  cfg.train.iters = 150;
  cfg.train.lr_max = 3e-3;
  const auto data = make_split(cfg.data, Split::train);
  TrainState s = init_train_state(cfg.net, 2);
  train(s, data, cfg.net, cfg.train);
  const auto l = losses(s);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 15; ++i) first += l[i], last += l[l.size() - 1 - i];
  EXPECT_LT(last, 0.8 * first);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const RunConfig cfg = tiny_run();
  const auto data = make_split(cfg.data, Split::train);
  TrainState s = init_train_state(cfg.net, cfg.train.seed);
  TrainHooks hooks;
  hooks.stop_after = 5;
  train(s, data, cfg.net, cfg.train, hooks);
  std::stringstream buf;
  write_checkpoint(buf, cfg, s);
  const std::string bytes = buf.str();
  const Checkpoint ck = read_checkpoint(buf);
  EXPECT_EQ(serialize_config(ck.config), serialize_config(cfg));
  EXPECT_EQ(ck.state.step, 5u);
  EXPECT_EQ(ck.state.running_loss, s.running_loss);
  EXPECT_EQ(ck.state.optim.step, s.optim.step);
  const auto a = s.params.all(), b = ck.state.params.all();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value(), b[i].value());
  EXPECT_EQ(ck.state.optim.m, s.optim.m);
  EXPECT_EQ(ck.state.optim.v, s.optim.v);
  std::stringstream again;
  write_checkpoint(again, ck.config, ck.state);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, ResumeMatchesUninterrupted) {
  const RunConfig cfg = tiny_run();
  const auto data = make_split(cfg.data, Split::train);
  TrainState full = init_train_state(cfg.net, cfg.train.seed);
  train(full, data, cfg.net, cfg.train);

  TrainState first = init_train_state(cfg.net, cfg.train.seed);
  TrainHooks hooks;
  hooks.stop_after = 7;
  train(first, data, cfg.net, cfg.train, hooks);
  std::stringstream buf;
  write_checkpoint(buf, cfg, first);
  Checkpoint ck = read_checkpoint(buf);
  train(ck.state, data, ck.config.net, ck.config.train);

  std::vector<double> stitched = losses(first);
  for (double l : losses(ck.state)) stitched.push_back(l);
  EXPECT_EQ(stitched, losses(full));
  const auto a = full.params.all(), b = ck.state.params.all();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value(), b[i].value());
  EXPECT_EQ(ck.state.running_loss, full.running_loss);
}

TEST(Checkpoint, CorruptInputIsFormatError) {
  const RunConfig cfg = tiny_run();
  const TrainState s = init_train_state(cfg.net, 1);
  std::stringstream buf;
  write_checkpoint(buf, cfg, s);
  const std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_checkpoint(truncated), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream wrong(bad);
  EXPECT_THROW(read_checkpoint(wrong), FormatError);
}
