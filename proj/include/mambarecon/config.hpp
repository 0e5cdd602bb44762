#pragma once

// Flat run configuration: one `key = value` per line, `#` starts a comment,
// blank lines ignored, unknown keys rejected.
//
//   network   depth hidden_dim state_dim patch_size image_size ncoils dt_rank
//             per_direction_ssm variant bbar_mode
//   training  iters batch lr_max lr_min warmup_iters weight_decay beta1 beta2
//             adam_eps seed log_every checkpoint_every threads
//   data      data_dir n_train n_val n_test accelerations mask_seed calib
//             mask_sigma coil_width data_seed phantom_min_ellipses
//             phantom_max_ellipses phantom_min_intensity
//             phantom_max_intensity phantom_phase_scale
//
// image_size sets both the network extents and the phantom size; ncoils sets
// both the network and the dataset coil count. accelerations is a
// comma-separated list.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mambarecon/phantom.hpp"
#include "mambarecon/training.hpp"

namespace mambarecon {

struct RunConfig {
  NetworkConfig net;
  TrainConfig train;
  DatasetConfig data;
  std::string data_dir = "data";

  void validate() const {
    net.validate();
    train.validate();
    if (net.height != data.phantom.size || net.width != data.phantom.size)
      throw ConfigError("config: network extents differ from the phantom size");
    if (net.ncoils != data.ncoils) throw ConfigError("config: network and dataset coil counts differ");
    if (data.accelerations.empty()) throw ConfigError("config: accelerations must list at least one rate");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("config: invalid value '" + std::string(text) + "' for " + std::string(key));
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

// `ref` is a generic accessor returning a (const) reference to the field.
template <typename T, typename Ref>
ConfigKey numeric(std::string name, Ref ref) {
  return {name,
          [name, ref](RunConfig& c, std::string_view v) { ref(c) = parse_number<T>(name, v); },
          [ref](const RunConfig& c) { return format_number<T>(ref(c)); }};
}

inline std::string join_rates(const std::vector<double>& rates) {
  std::string out;
  for (std::size_t i = 0; i < rates.size(); ++i) out += (i ? "," : "") + format_number(rates[i]);
  return out;
}

inline std::vector<double> split_rates(std::string_view key, std::string_view text) {
  std::vector<double> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<double>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

inline const std::vector<ConfigKey>& config_keys() {
  using C = RunConfig;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(numeric<std::size_t>("depth", [](auto& c) -> auto& { return c.net.depth; }));
    k.push_back(numeric<std::size_t>("hidden_dim", [](auto& c) -> auto& { return c.net.hidden_dim; }));
    k.push_back(numeric<std::size_t>("state_dim", [](auto& c) -> auto& { return c.net.state_dim; }));
    k.push_back(numeric<std::size_t>("patch_size", [](auto& c) -> auto& { return c.net.patch_size; }));
    k.push_back({"image_size",
                 [](C& c, std::string_view v) {
                   const auto n = parse_number<std::size_t>("image_size", v);
                   c.net.height = c.net.width = c.data.phantom.size = n;
                 },
                 [](const C& c) { return format_number(c.net.height); }});
    k.push_back({"ncoils",
                 [](C& c, std::string_view v) { c.net.ncoils = c.data.ncoils = parse_number<std::size_t>("ncoils", v); },
                 [](const C& c) { return format_number(c.net.ncoils); }});
    k.push_back(numeric<std::size_t>("dt_rank", [](auto& c) -> auto& { return c.net.dt_rank; }));
    k.push_back({"per_direction_ssm",
                 [](C& c, std::string_view v) { c.net.per_direction_ssm = parse_bool("per_direction_ssm", v); },
                 [](const C& c) { return std::string(c.net.per_direction_ssm ? "true" : "false"); }});
    k.push_back({"variant", [](C& c, std::string_view v) { c.net.variant = parse_variant(std::string(v)); },
                 [](const C& c) { return to_string(c.net.variant); }});
    k.push_back({"bbar_mode", [](C& c, std::string_view v) { c.net.bbar_mode = parse_bbar_mode(std::string(v)); },
                 [](const C& c) { return to_string(c.net.bbar_mode); }});

    k.push_back(numeric<std::size_t>("iters", [](auto& c) -> auto& { return c.train.iters; }));
    k.push_back(numeric<std::size_t>("batch", [](auto& c) -> auto& { return c.train.batch; }));
    k.push_back(numeric<double>("lr_max", [](auto& c) -> auto& { return c.train.lr_max; }));
    k.push_back(numeric<double>("lr_min", [](auto& c) -> auto& { return c.train.lr_min; }));
    k.push_back(numeric<long>("warmup_iters", [](auto& c) -> auto& { return c.train.warmup_iters; }));
    k.push_back(numeric<double>("weight_decay", [](auto& c) -> auto& { return c.train.weight_decay; }));
    k.push_back(numeric<double>("beta1", [](auto& c) -> auto& { return c.train.beta1; }));
    k.push_back(numeric<double>("beta2", [](auto& c) -> auto& { return c.train.beta2; }));
    k.push_back(numeric<double>("adam_eps", [](auto& c) -> auto& { return c.train.adam_eps; }));
    k.push_back(numeric<std::uint64_t>("seed", [](auto& c) -> auto& { return c.train.seed; }));
    k.push_back(numeric<std::size_t>("log_every", [](auto& c) -> auto& { return c.train.log_every; }));
    k.push_back(numeric<std::size_t>("checkpoint_every", [](auto& c) -> auto& { return c.train.checkpoint_every; }));
    k.push_back(numeric<std::size_t>("threads", [](auto& c) -> auto& { return c.train.threads; }));

    k.push_back({"data_dir", [](C& c, std::string_view v) { c.data_dir = std::string(v); },
                 [](const C& c) { return c.data_dir; }});
    k.push_back(numeric<std::size_t>("n_train", [](auto& c) -> auto& { return c.data.n_train; }));
    k.push_back(numeric<std::size_t>("n_val", [](auto& c) -> auto& { return c.data.n_val; }));
    k.push_back(numeric<std::size_t>("n_test", [](auto& c) -> auto& { return c.data.n_test; }));
    k.push_back({"accelerations", [](C& c, std::string_view v) { c.data.accelerations = split_rates("accelerations", v); },
                 [](const C& c) { return join_rates(c.data.accelerations); }});
    k.push_back(numeric<std::uint64_t>("mask_seed", [](auto& c) -> auto& { return c.data.mask_seed; }));
    k.push_back(numeric<std::size_t>("calib", [](auto& c) -> auto& { return c.data.calib; }));
    k.push_back(numeric<double>("mask_sigma", [](auto& c) -> auto& { return c.data.mask_sigma; }));
    k.push_back(numeric<double>("coil_width", [](auto& c) -> auto& { return c.data.coil_width; }));
    k.push_back(numeric<std::uint64_t>("data_seed", [](auto& c) -> auto& { return c.data.phantom.seed; }));
    k.push_back(numeric<std::size_t>("phantom_min_ellipses", [](auto& c) -> auto& { return c.data.phantom.min_ellipses; }));
    k.push_back(numeric<std::size_t>("phantom_max_ellipses", [](auto& c) -> auto& { return c.data.phantom.max_ellipses; }));
    k.push_back(numeric<double>("phantom_min_intensity", [](auto& c) -> auto& { return c.data.phantom.min_intensity; }));
    k.push_back(numeric<double>("phantom_max_intensity", [](auto& c) -> auto& { return c.data.phantom.max_intensity; }));
    k.push_back(numeric<double>("phantom_phase_scale", [](auto& c) -> auto& { return c.data.phantom.phase_scale; }));
    return k;
  }();
  return keys;
}

}  // namespace detail

/// Names of every accepted key, in serialization order.
inline std::vector<std::string> config_key_names() {
  std::vector<std::string> out;
  for (const auto& k : detail::config_keys()) out.push_back(k.name);
  return out;
}

/// Apply one `key = value` assignment.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : detail::config_keys())
    if (k.name == key) return k.set(cfg, detail::trim(value));
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

/// Parse config text on top of `base`; errors name the offending line.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    try {
      set_config_value(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

/// Every key, one per line; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace mambarecon
