#pragma once

// MRTN tensor container, little-endian:
//
//   offset  size        field
//   0       4           magic "MRTN"
//   4       4 (u32)     format version (1)
//   8       4 (u32)     dtype code (1 = f64)
//   12      4 (u32)     ndim
//   16      8*ndim      dims (u64 each)
//   ...     8*prod(dims) payload (f64, row-major)

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "mambarecon/tensor.hpp"

namespace mambarecon {

inline constexpr std::array<char, 4> kTensorMagic{'M', 'R', 'T', 'N'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kDtypeF64 = 1;
inline constexpr std::uint32_t kMaxRank = 16;

namespace io {

template <typename T>
void write_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const auto bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  os.write(bytes, sizeof(U));
}

/// Byte reader that remembers its position for error reports.
class Reader {
 public:
  Reader(std::istream& is, std::uint64_t base = 0) : is_(is), offset_(base) {}

  void read_bytes(char* out, std::size_t n, const char* what) {
    is_.read(out, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) throw FormatError(std::string("truncated input while reading ") + what, offset_ + got);
    offset_ += n;
  }

  template <typename T>
  T read_le(const char* what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char bytes[sizeof(U)];
    read_bytes(reinterpret_cast<char*>(bytes), sizeof(U), what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
    return std::bit_cast<T>(bits);
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::uint64_t offset_;
};

}  // namespace io

inline std::uint64_t tensor_header_bytes(std::size_t rank) { return 16 + 8 * rank; }

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic.data(), kTensorMagic.size());
  io::write_le<std::uint32_t>(os, kTensorVersion);
  io::write_le<std::uint32_t>(os, kDtypeF64);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) io::write_le<std::uint64_t>(os, d);
  for (double v : t.data()) io::write_le<double>(os, v);
}

inline Tensor read_tensor(io::Reader& in) {
  const std::uint64_t start = in.offset();
  std::array<char, 4> magic{};
  in.read_bytes(magic.data(), magic.size(), "magic");
  if (magic != kTensorMagic) throw FormatError("bad tensor magic", start);
  const auto version = in.read_le<std::uint32_t>("version");
  if (version != kTensorVersion)
    throw FormatError("unsupported tensor format version " + std::to_string(version), in.offset() - 4);
  const auto dtype = in.read_le<std::uint32_t>("dtype");
  if (dtype != kDtypeF64) throw FormatError("unsupported dtype code " + std::to_string(dtype), in.offset() - 4);
  const auto ndim = in.read_le<std::uint32_t>("ndim");
  if (ndim > kMaxRank) throw FormatError("implausible rank " + std::to_string(ndim), in.offset() - 4);
  Shape shape(ndim);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = in.read_le<std::uint64_t>("dims");
    if (d != 0 && count > (std::uint64_t{1} << 40) / d) throw FormatError("implausible tensor size", in.offset() - 8);
    count *= d;
  }
  // Grow as bytes arrive so a corrupt header cannot trigger a huge allocation.
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) data.push_back(in.read_le<double>("payload"));
  return Tensor(std::move(shape), std::move(data));
}

inline Tensor read_tensor(std::istream& is) {
  io::Reader reader(is);
  return read_tensor(reader);
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace mambarecon
