#pragma once

// MRCK checkpoint, little-endian:
//
//   "MRCK"  u32 version (1)
//   u64 n   config text (n bytes, serialize_config format)
//   u64     training step
//   f64     running loss
//   u64 P   parameter count, then P MRTN tensor records (NetworkParams::named order)
//   P MRTN  first moments, P MRTN second moments
//   u64     optimizer step

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mambarecon/config.hpp"
#include "mambarecon/tensor_io.hpp"

namespace mambarecon {

inline constexpr std::array<char, 4> kCheckpointMagic{'M', 'R', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

inline void write_checkpoint(std::ostream& os, const RunConfig& cfg, const TrainState& state) {
  const std::string text = serialize_config(cfg);
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  io::write_le<std::uint32_t>(os, kCheckpointVersion);
  io::write_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  io::write_le<std::uint64_t>(os, state.step);
  io::write_le<double>(os, state.running_loss);
  const auto params = state.params.all();
  io::write_le<std::uint64_t>(os, params.size());
  for (const auto& p : params) write_tensor(os, p.value());
  for (const auto& m : state.optim.m) write_tensor(os, m);
  for (const auto& v : state.optim.v) write_tensor(os, v);
  io::write_le<std::uint64_t>(os, state.optim.step);
}

/// Rebuilds the network from the stored config, then overwrites every tensor.
inline Checkpoint read_checkpoint(std::istream& is) {
  io::Reader in(is);
  std::array<char, 4> magic{};
  in.read_bytes(magic.data(), magic.size(), "magic");
  if (magic != kCheckpointMagic) throw FormatError("bad checkpoint magic", 0);
  const auto version = in.read_le<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), in.offset() - 4);
  const auto len = in.read_le<std::uint64_t>("config length");
  if (len > (1u << 20)) throw FormatError("implausible config length", in.offset() - 8);
  std::string text(len, '\0');
  in.read_bytes(text.data(), text.size(), "config");

  Checkpoint ck;
  ck.config = parse_config(text);
  ck.state = init_train_state(ck.config.net, ck.config.train.seed);
  ck.state.step = in.read_le<std::uint64_t>("step");
  ck.state.running_loss = in.read_le<double>("running loss");
  auto params = ck.state.params.all();
  const std::uint64_t count_offset = in.offset();
  if (in.read_le<std::uint64_t>("parameter count") != params.size())
    throw FormatError("parameter count does not match the stored configuration", count_offset);
  auto read_like = [&](const Tensor& like, const char* what) {
    const std::uint64_t at = in.offset();
    Tensor t = read_tensor(in);
    if (t.shape() != like.shape())
      throw FormatError(std::string(what) + " tensor has shape " + shape_string(t.shape()) + ", expected " +
                            shape_string(like.shape()),
                        at);
    return t;
  };
  for (auto& p : params) p.mutable_value() = read_like(p.value(), "parameter");
  for (auto& m : ck.state.optim.m) m = read_like(m, "first moment");
  for (auto& v : ck.state.optim.v) v = read_like(v, "second moment");
  ck.state.optim.step = in.read_le<std::uint64_t>("optimizer step");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const TrainState& state) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, cfg, state);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace mambarecon
