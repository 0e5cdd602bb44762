#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mambarecon/network.hpp"
#include "mambarecon/phantom.hpp"

namespace mambarecon {

struct TrainConfig {
  std::size_t iters = 2000;
  std::size_t batch = 4;
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  /// Linear warm-up length; a negative value selects 5% of iters.
  long warmup_iters = -1;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 0;  ///< 0 disables periodic checkpoints
  std::size_t threads = 1;

  std::size_t warmup() const {
    return warmup_iters < 0 ? iters / 20 : static_cast<std::size_t>(warmup_iters);
  }

  void validate() const {
    if (!(lr_min < lr_max)) throw ConfigError("train: lr_min must be below lr_max");
    if (iters > 0 && warmup() >= iters) throw ConfigError("train: warmup_iters must be below iters");
    if (batch == 0) throw ConfigError("train: batch must be >= 1");
    if (threads == 0) throw ConfigError("train: threads must be >= 1");
  }
};

/// Linear ramp 0 -> lr_max over the warm-up, then half-cycle cosine to lr_min at `iters`.
inline double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.iters)
    throw ContractError("lr_schedule: step " + std::to_string(step) + " beyond " + std::to_string(cfg.iters));
  const std::size_t warmup = cfg.warmup();
  if (step < warmup) return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(cfg.iters - warmup);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Mean absolute difference over both channels of two [H,W,2] images.
inline Var l1_loss(const Var& x_r, const Var& x_fs) {
  if (x_r.shape() != x_fs.shape())
    throw DimensionError("l1_loss: " + shape_string(x_r.shape()) + " vs " + shape_string(x_fs.shape()));
  return mean_abs_diff(x_r, x_fs);
}

inline double l1_loss(const ComplexImage& x_r, const ComplexImage& x_fs) {
  return l1_loss(constant(x_r.tensor()), constant(x_fs.tensor())).value()[0];
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimState {
  std::vector<Tensor> m, v;
  std::uint64_t step = 0;

  static OptimState zeros_like(const std::vector<Var>& params) {
    OptimState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.shape());
      s.v.emplace_back(p.shape());
    }
    return s;
  }
};

/// Bias-corrected Adam moments with decoupled weight decay:
///   theta <- theta (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)
inline void adamw_step(std::span<Var> params, std::span<const Tensor> grads, OptimState& state, double lr,
                       const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimensionError("adamw_step: parameter, gradient and moment counts differ");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& theta = params[k].mutable_value();
    const Tensor& g = grads[k];
    theta.check_same_shape(g, "adamw_step");
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] = theta[i] * decay - lr * (mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

struct LossRecord {
  std::size_t step = 0;  ///< 1-based update number
  double lr = 0.0;
  double loss = 0.0;
};

/// Everything needed to continue training bit-for-bit.
struct TrainState {
  NetworkParams params;
  OptimState optim;
  std::size_t step = 0;
  double running_loss = 0.0;
  std::vector<LossRecord> log;  ///< updates performed by this process
};

inline TrainState init_train_state(const NetworkConfig& net, std::uint64_t seed) {
  TrainState s;
  s.params = build(net, seed);
  s.optim = OptimState::zeros_like(s.params.all());
  return s;
}

struct TrainHooks {
  std::function<void(const LossRecord&)> on_step;
  std::function<void(const TrainState&)> on_checkpoint;
  /// Stop after this update number even if cfg.iters is larger (schedule still uses cfg.iters).
  std::size_t stop_after = std::numeric_limits<std::size_t>::max();
};

/// Loss and parameter gradients of one example.
struct ExampleGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

inline ExampleGrad example_gradient(const Sample& s, const NetworkParams& params, const NetworkConfig& net) {
  const Var x_r = reconstruct(constant(s.x_us.tensor()), s.mask, s.coils, params, net);
  const Var loss = l1_loss(x_r, constant(s.x_fs.tensor()));
  const Gradients g = backward(loss);
  ExampleGrad out;
  out.loss = loss.value()[0];
  for (const auto& p : params.all()) out.grads.push_back(g.get(p));
  return out;
}

/// Batch indices for update `step`: uniform with replacement, a function of (seed, step) only.
inline std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::size_t step, std::size_t dataset_size) {
  Rng rng({cfg.seed, static_cast<std::uint64_t>(step), 0xBA7Cu});
  std::vector<std::size_t> idx(cfg.batch);
  for (auto& i : idx) i = rng.index(dataset_size);
  return idx;
}

/// Run updates state.step+1 .. min(cfg.iters, hooks.stop_after). Batch
/// elements may run on separate threads; gradients are reduced in element order.
inline void train(TrainState& state, const std::vector<Sample>& data, const NetworkConfig& net, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: dataset is empty");
  std::vector<Var> params = state.params.all();
  const AdamConfig adam{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
  const std::size_t last = std::min(cfg.iters, hooks.stop_after);
  while (state.step < last) {
    const std::size_t update = state.step + 1;
    const auto idx = batch_indices(cfg, state.step, data.size());
    std::vector<ExampleGrad> parts(idx.size());
    if (cfg.threads > 1) {
      for (std::size_t begin = 0; begin < idx.size(); begin += cfg.threads) {
        std::vector<std::thread> workers;
        for (std::size_t e = begin; e < std::min(idx.size(), begin + cfg.threads); ++e)
          workers.emplace_back([&, e] { parts[e] = example_gradient(data[idx[e]], state.params, net); });
        for (auto& w : workers) w.join();
      }
    } else {
      for (std::size_t e = 0; e < idx.size(); ++e) parts[e] = example_gradient(data[idx[e]], state.params, net);
    }
    double loss = 0.0;
    std::vector<Tensor> grads = std::move(parts[0].grads);
    loss += parts[0].loss;
    for (std::size_t e = 1; e < parts.size(); ++e) {
      loss += parts[e].loss;
      for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += parts[e].grads[k];
    }
    const double inv = 1.0 / static_cast<double>(parts.size());
    loss *= inv;
    for (auto& g : grads)
      for (double& v : g.data()) v *= inv;
    if (!std::isfinite(loss))
      throw NumericError("training diverged: non-finite loss at update " + std::to_string(update));

    const double lr = lr_schedule(update, cfg);
    adamw_step(params, grads, state.optim, lr, adam);
    state.step = update;
    state.running_loss = update == 1 ? loss : 0.95 * state.running_loss + 0.05 * loss;
    const LossRecord rec{update, lr, loss};
    state.log.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.on_checkpoint && cfg.checkpoint_every && update % cfg.checkpoint_every == 0) hooks.on_checkpoint(state);
  }
}

}  // namespace mambarecon
