#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/parameters.hpp"

namespace e3 {

class checkpoint_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Archive layout (all integers little-endian):
//   "E3CKPT01"
//   u64 metadata length, metadata as UTF-8 JSON
//   u64 entry count, then per entry:
//     u64 name length, name bytes, u8 element size (4 or 8), u64 rank,
//     u64 dims[rank], raw little-endian element values
struct checkpoint_entry {
  shape_t shape;
  std::vector<double> values;
};

struct checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, checkpoint_entry> entries;
  // Element width (4 or 8 bytes) each entry was written with.
  std::map<std::string, std::uint8_t> widths;
};

namespace detail {

inline constexpr std::array<char, 8> checkpoint_magic{'E', '3', 'C', 'K', 'P', 'T', '0', '1'};

template <class U>
void write_le(std::ostream& os, U v) {
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <class U>
U read_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes;
  is.read(reinterpret_cast<char*>(bytes.data()), sizeof(U));
  if (!is) throw checkpoint_error("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U v;
  std::memcpy(&v, bytes.data(), sizeof(U));
  return v;
}

inline std::string read_string(std::istream& is, std::uint64_t n) {
  if (n > (1ull << 32)) throw checkpoint_error("checkpoint string length implausible");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw checkpoint_error("checkpoint truncated");
  return s;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const parameter_set<T>& params,
                     const nlohmann::json& metadata) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw checkpoint_error("cannot open checkpoint for writing: " + path.string());
  os.write(detail::checkpoint_magic.data(), detail::checkpoint_magic.size());
  const std::string meta = metadata.dump();
  detail::write_le<std::uint64_t>(os, meta.size());
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::write_le<std::uint64_t>(os, params.size());
  for (const auto& [name, t] : params) {
    detail::write_le<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint8_t>(os, sizeof(T));
    detail::write_le<std::uint64_t>(os, t.rank());
    for (auto d : t.shape()) detail::write_le<std::uint64_t>(os, d);
    for (T v : t.data()) detail::write_le<T>(os, v);
  }
  if (!os) throw checkpoint_error("failed writing checkpoint: " + path.string());
}

inline checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw checkpoint_error("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != detail::checkpoint_magic) throw checkpoint_error("not a checkpoint file: " + path.string());
  checkpoint ckpt;
  const auto meta_len = detail::read_le<std::uint64_t>(is);
  ckpt.metadata = nlohmann::json::parse(detail::read_string(is, meta_len));
  const auto count = detail::read_le<std::uint64_t>(is);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name = detail::read_string(is, detail::read_le<std::uint64_t>(is));
    const auto width = detail::read_le<std::uint8_t>(is);
    if (width != 4 && width != 8) throw checkpoint_error("bad element width for " + name);
    const auto rank = detail::read_le<std::uint64_t>(is);
    if (rank > 8) throw checkpoint_error("implausible rank for " + name);
    checkpoint_entry entry;
    for (std::uint64_t r = 0; r < rank; ++r) entry.shape.push_back(detail::read_le<std::uint64_t>(is));
    const auto n = shape_size(entry.shape);
    entry.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      entry.values[i] = width == 4 ? detail::read_le<float>(is) : detail::read_le<double>(is);
    ckpt.widths.emplace(name, width);
    ckpt.entries.emplace(name, std::move(entry));
  }
  return ckpt;
}

/// Copies checkpoint values into matching parameters. Every parameter whose
/// name starts with `prefix` must be present with an identical shape.
template <class T>
void load_parameters(const checkpoint& ckpt, parameter_set<T>& params, const std::string& prefix = "") {
  for (auto& [name, t] : params) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto it = ckpt.entries.find(name);
    if (it == ckpt.entries.end()) throw checkpoint_error("checkpoint lacks parameter " + name);
    if (it->second.shape != t.shape())
      throw checkpoint_error("shape mismatch for " + name + ": checkpoint " + shape_str(it->second.shape) +
                             " vs model " + shape_str(t.shape()));
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.values[i]);
  }
}

}  // namespace e3
