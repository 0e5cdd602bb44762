#pragma once

// Command-line front end. Every subcommand accepts `--set key=value`
// overrides in the config grammar where a configuration is involved.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mambarecon/baselines.hpp"
#include "mambarecon/checkpoint.hpp"
#include "mambarecon/dataset.hpp"
#include "mambarecon/metrics.hpp"

namespace mambarecon {

namespace cli {

namespace fs = std::filesystem;

struct ConfigSource {
  std::string path;
  std::vector<std::string> overrides;

  RunConfig load() const {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, detail::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
    }
    return cfg;
  }
};

inline void add_config_options(CLI::App* cmd, ConfigSource& src) {
  cmd->add_option("--config", src.path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", src.overrides, "override one configuration key (key=value), repeatable");
}

inline std::string num(double v) { return std::isinf(v) ? (v > 0 ? "inf" : "-inf") : detail::format_number(v); }

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
}

inline void require_compatible(const RunConfig& model, const RunConfig& data) {
  if (model.net.height != data.data.phantom.size || model.net.width != data.data.phantom.size)
    throw ConfigError("dataset images are " + std::to_string(data.data.phantom.size) + "x" +
                      std::to_string(data.data.phantom.size) + " but the network expects " +
                      std::to_string(model.net.height) + "x" + std::to_string(model.net.width));
  if (model.net.ncoils != data.data.ncoils) throw ConfigError("dataset coil count differs from the network's");
}

/// |x_r - x_fs| magnitude, written max-normalized by write_pgm.
inline Tensor error_map(const ComplexImage& x_r, const ComplexImage& x_fs) {
  Tensor out(Shape{x_r.height(), x_r.width()});
  for (std::size_t p = 0; p < x_r.pixels(); ++p) out[p] = std::abs(x_r.pixel(p) - x_fs.pixel(p));
  return out;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  ConfigSource cfg;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int run_gen_data(const GenDataArgs& a, std::ostream& out) {
  RunConfig cfg = a.cfg.load();
  if (a.seed) cfg.data.phantom.seed = cfg.data.mask_seed = *a.seed;
  cfg.data_dir = a.out;
  cfg.validate();
  make_dataset(a.out, cfg);
  out << "wrote " << cfg.data.n_train << "/" << cfg.data.n_val << "/" << cfg.data.n_test << " slices x "
      << cfg.data.accelerations.size() << " rates to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  ConfigSource cfg;
  std::string data, out, log, resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, stop_after;
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg;
  TrainState state;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    cfg = std::move(ck.config);
    state = std::move(ck.state);
  } else {
    cfg = a.cfg.load();
    if (a.seed) cfg.train.seed = *a.seed;
    if (!a.data.empty()) cfg.data_dir = a.data;
  }
  if (a.threads) cfg.train.threads = *a.threads;
  const RunConfig data_cfg = load_dataset_config(cfg.data_dir);
  cfg.data = data_cfg.data;
  cfg.validate();
  if (a.resume.empty()) state = init_train_state(cfg.net, cfg.train.seed);

  const std::vector<Sample> data = load_split(cfg.data_dir, Split::train);
  TrainHooks hooks;
  if (a.stop_after) hooks.stop_after = *a.stop_after;
  const std::size_t every = std::max<std::size_t>(cfg.train.log_every, 1);
  hooks.on_step = [&](const LossRecord& r) {
    if (r.step % every == 0 || r.step == cfg.train.iters)
      out << "step " << r.step << " lr " << num(r.lr) << " loss " << num(r.loss) << "\n" << std::flush;
  };
  hooks.on_checkpoint = [&](const TrainState& s) { save_checkpoint(a.out, cfg, s); };
  train(state, data, cfg.net, cfg.train, hooks);
  save_checkpoint(a.out, cfg, state);
  if (!a.log.empty()) {
    std::string csv = "step,lr,loss\n";
    for (const auto& r : state.log) csv += std::to_string(r.step) + "," + num(r.lr) + "," + num(r.loss) + "\n";
    write_text(a.log, csv);
  }
  out << "saved " << a.out << " at step " << state.step << "\n";
  return 0;
}

/// A checkpoint's settings together with the dataset it is evaluated on.
struct ModelAndData {
  std::optional<Checkpoint> ck;
  std::string data_dir;
};

inline ModelAndData open_model(const std::string& ckpt, const std::string& data) {
  ModelAndData m;
  if (!ckpt.empty()) m.ck = load_checkpoint(ckpt);
  m.data_dir = !data.empty() ? data : (m.ck ? m.ck->config.data_dir : std::string("data"));
  if (m.ck) require_compatible(m.ck->config, load_dataset_config(m.data_dir));
  return m;
}

struct ReconstructArgs {
  std::string ckpt, data, split = "test", out, pgm, error_pgm;
  std::size_t index = 0;
  std::optional<double> rate;
};

inline int run_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  const ModelAndData m = open_model(a.ckpt, a.data);
  const RunConfig dcfg = load_dataset_config(m.data_dir);
  const Split split = parse_split(a.split);
  const auto indices = split_indices(dcfg.data, split);
  if (a.index >= indices.size())
    throw ConfigError("--index " + std::to_string(a.index) + " out of range for split of " +
                      std::to_string(indices.size()));
  const double r = a.rate.value_or(dcfg.data.accelerations.front());
  const Sample s = load_sample(m.data_dir, split, indices[a.index], r);
  const ComplexImage x_r = reconstruct(s.x_us, s.mask, s.coils, m.ck->state.params, m.ck->config.net);
  save_tensor(a.out, x_r.tensor());
  if (!a.pgm.empty()) write_pgm(a.pgm, x_r.magnitude());
  if (!a.error_pgm.empty()) write_pgm(a.error_pgm, error_map(x_r, s.x_fs));
  const ImageQuality q = image_quality(x_r, s.x_fs);
  out << "slice " << s.index << " R " << num(r) << " psnr_db " << num(q.psnr_db) << " ssim " << num(q.ssim) << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string ckpt, baseline, data, split = "test", out;
  CgConfig cg;
};

inline int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.ckpt.empty() == a.baseline.empty()) throw ConfigError("evaluate: give exactly one of --ckpt or --baseline");
  if (!a.baseline.empty() && a.baseline != "zero_filled" && a.baseline != "cg")
    throw ConfigError("unknown baseline '" + a.baseline + "' (expected zero_filled or cg)");
  const ModelAndData m = open_model(a.ckpt, a.data);
  const std::vector<Sample> samples = load_split(m.data_dir, parse_split(a.split));
  std::string csv = "slice,R,psnr_db,ssim\n";
  std::vector<double> ps, ss;
  for (const Sample& s : samples) {
    ComplexImage x_r;
    if (m.ck)
      x_r = reconstruct(s.x_us, s.mask, s.coils, m.ck->state.params, m.ck->config.net);
    else if (a.baseline == "cg")
      x_r = cg_tikhonov(encode(s.x_fs, s.coils, s.mask), s.coils, s.mask, a.cg).image;
    else
      x_r = s.x_us;
    const ImageQuality q = image_quality(x_r, s.x_fs);
    csv += std::to_string(s.index) + "," + num(s.acceleration) + "," + num(q.psnr_db) + "," + num(q.ssim) + "\n";
    ps.push_back(q.psnr_db);
    ss.push_back(q.ssim);
  }
  write_text(a.out, csv);
  out << "median psnr_db " << num(median(ps)) << " ssim " << num(median(ss)) << " over " << samples.size()
      << " samples\n";
  return 0;
}

struct ErfArgs {
  std::string ckpt, data, split = "test", out, pgm;
  std::size_t count = 100;
};

inline int run_erf(const ErfArgs& a, std::ostream& out) {
  const ModelAndData m = open_model(a.ckpt, a.data);
  const RunConfig dcfg = load_dataset_config(m.data_dir);
  const Split split = parse_split(a.split);
  const auto indices = split_indices(dcfg.data, split);
  std::vector<ComplexImage> inputs;
  CoilMaps coils;
  for (std::size_t k = 0; k < std::min(a.count, indices.size()); ++k) {
    Sample s = load_sample(m.data_dir, split, indices[k], dcfg.data.accelerations.front());
    if (k == 0) coils = s.coils;
    inputs.push_back(std::move(s.x_us));
  }
  const auto& net = m.ck->config.net;
  const Tensor erf = effective_receptive_field(erf_network_model(m.ck->state.params, net, coils), inputs);
  save_tensor(a.out, erf);
  if (!a.pgm.empty()) write_pgm(a.pgm, erf);
  out << "erf over " << inputs.size() << " slices; mass outside radius " << net.height / 4 << ": "
      << num(mass_outside_radius(erf, static_cast<double>(net.height) / 4.0)) << "\n";
  return 0;
}

struct MaskArgs {
  std::size_t size = 64, calib = 8;
  double rate = 4.0, sigma = 0.0;
  std::uint64_t seed = 1;
  std::string out, pgm;
};

inline int run_mask_gen(const MaskArgs& a, std::ostream& out) {
  const Mask m = generate_gaussian_mask(a.size, a.size, a.rate, a.seed, {a.calib, a.sigma});
  save_tensor(a.out, m.grid);
  if (!a.pgm.empty()) write_pgm(a.pgm, m.grid);
  out << "mask " << a.size << "x" << a.size << " R " << num(a.rate) << " samples " << m.sampled() << "\n";
  return 0;
}

inline int run_param_count(const ConfigSource& src, std::ostream& out) {
  const RunConfig cfg = src.load();
  const std::size_t n = param_count(cfg.net);
  const double rel = (static_cast<double>(n) - kReferenceParamCount) / kReferenceParamCount;
  out << "depth " << cfg.net.depth << " hidden_dim " << cfg.net.hidden_dim << " state_dim " << cfg.net.state_dim
      << " patch_size " << cfg.net.patch_size << " variant " << to_string(cfg.net.variant) << "\n";
  out << "param_count " << n << "\n";
  out << "reference 2.05e+06\n";
  out << "relative_difference " << num(rel) << "\n";
  return 0;
}

}  // namespace cli

/// Parse and run one command line (args excludes the program name).
/// Returns 0 on success, 1 on a runtime failure, 2 on a usage error.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli;
  CLI::App app{"MambaRecon: state-space MRI reconstruction", "mambarecon"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a phantom dataset");
  add_config_options(gen_cmd, gen.cfg);
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "phantom and mask seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a network");
  add_config_options(train_cmd, tr.cfg);
  train_cmd->add_option("--data", tr.data, "dataset directory (default: data_dir)");
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--log", tr.log, "loss log CSV (step,lr,loss)");
  train_cmd->add_option("--resume", tr.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", tr.seed, "initialization and batch seed");
  train_cmd->add_option("--threads", tr.threads, "batch-element threads");
  train_cmd->add_option("--stop-after", tr.stop_after, "stop after this update (schedule unchanged)");

  ReconstructArgs rc;
  auto* rec_cmd = app.add_subcommand("reconstruct", "reconstruct one slice");
  rec_cmd->add_option("--ckpt", rc.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  rec_cmd->add_option("--data", rc.data, "dataset directory (default: from checkpoint)");
  rec_cmd->add_option("--split", rc.split, "train, val or test");
  rec_cmd->add_option("--index", rc.index, "position within the split");
  rec_cmd->add_option("--R", rc.rate, "acceleration (default: first in dataset)");
  rec_cmd->add_option("--out", rc.out, "output tensor [H,W,2]")->required();
  rec_cmd->add_option("--pgm", rc.pgm, "magnitude image (P5)");
  rec_cmd->add_option("--error-pgm", rc.error_pgm, "error map |x_r - x_fs| (P5)");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint or baseline on a split");
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint")->check(CLI::ExistingFile);
  eval_cmd->add_option("--baseline", ev.baseline, "zero_filled or cg");
  eval_cmd->add_option("--data", ev.data, "dataset directory (default: from checkpoint)");
  eval_cmd->add_option("--split", ev.split, "train, val or test");
  eval_cmd->add_option("--out", ev.out, "metrics CSV (slice,R,psnr_db,ssim)")->required();
  eval_cmd->add_option("--lambda", ev.cg.lambda, "cg regularization weight");
  eval_cmd->add_option("--cg-iters", ev.cg.max_iters, "cg iteration cap");
  eval_cmd->add_option("--cg-tol", ev.cg.tol, "cg relative residual threshold");

  ErfArgs er;
  auto* erf_cmd = app.add_subcommand("erf", "effective receptive field with a zero mask");
  erf_cmd->add_option("--ckpt", er.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  erf_cmd->add_option("--data", er.data, "dataset directory (default: from checkpoint)");
  erf_cmd->add_option("--split", er.split, "train, val or test");
  erf_cmd->add_option("--count", er.count, "number of slices averaged");
  erf_cmd->add_option("--out", er.out, "ERF tensor [H,W]")->required();
  erf_cmd->add_option("--pgm", er.pgm, "ERF image (P5)");

  MaskArgs mk;
  auto* mask_cmd = app.add_subcommand("mask-gen", "variable-density sampling mask");
  mask_cmd->add_option("--size", mk.size, "grid side");
  mask_cmd->add_option("--R", mk.rate, "acceleration");
  mask_cmd->add_option("--seed", mk.seed, "random seed");
  mask_cmd->add_option("--calib", mk.calib, "fully sampled center block side");
  mask_cmd->add_option("--sigma", mk.sigma, "density width in pixels (0: default)");
  mask_cmd->add_option("--out", mk.out, "mask tensor [H,W]")->required();
  mask_cmd->add_option("--pgm", mk.pgm, "mask image (P5)");

  ConfigSource pc;
  auto* pc_cmd = app.add_subcommand("param-count", "count trainable scalars");
  add_config_options(pc_cmd, pc);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen, out);
    if (*train_cmd) return run_train(tr, out);
    if (*rec_cmd) return run_reconstruct(rc, out);
    if (*eval_cmd) return run_evaluate(ev, out);
    if (*erf_cmd) return run_erf(er, out);
    if (*mask_cmd) return run_mask_gen(mk, out);
    if (*pc_cmd) return run_param_count(pc, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace mambarecon
