#pragma once

#include <filesystem>
#include <fstream>
#include <vector>

#include "mambarecon/config.hpp"

namespace mambarecon {

inline const char* kDatasetManifest = "dataset.cfg";

/// Write every split to `root` plus the settings that produced it. Rerunning
/// with the same settings rewrites byte-identical files.
inline void make_dataset(const std::filesystem::path& root, const RunConfig& cfg) {
  const DatasetConfig& d = cfg.data;
  if (d.n_train == 0 || d.n_val == 0 || d.n_test == 0) throw ConfigError("dataset: every split needs at least one slice");
  if (d.accelerations.empty()) throw ConfigError("dataset: no acceleration rates");
  std::filesystem::create_directories(root);
  for (Split split : {Split::train, Split::val, Split::test})
    for (const Sample& s : make_split(d, split)) save_sample(root, split, s);
  std::ofstream os(root / kDatasetManifest, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + (root / kDatasetManifest).string());
  os << serialize_config(cfg);
}

/// Settings recorded by make_dataset.
inline RunConfig load_dataset_config(const std::filesystem::path& root) { return load_config(root / kDatasetManifest); }

/// Every (slice, R) sample of a split, in (index, R) order.
inline std::vector<Sample> load_split(const std::filesystem::path& root, Split split) {
  const RunConfig cfg = load_dataset_config(root);
  std::vector<Sample> out;
  for (std::size_t idx : split_indices(cfg.data, split))
    for (double r : cfg.data.accelerations) out.push_back(load_sample(root, split, idx, r));
  return out;
}

}  // namespace mambarecon
