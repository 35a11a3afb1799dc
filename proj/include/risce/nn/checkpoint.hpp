#pragma once

// Checkpoint container: a little-endian named-array file.
//
//   magic "RISCECKP" | u32 version | u32 scalar bytes (4 or 8) | u64 adam step
//   u32 n_meta  { str key, str value }*
//   u32 n_param { str name, u32 rank, u64 dim*rank, value[], m[], v[] }*
//
// Strings are a u32 length followed by raw bytes.

#include <cstdint>
#include <cstring>
#include <map>
#include <string>

#include "risce/binary_io.hpp"
#include "risce/nn/params.hpp"

namespace risce::nn {

inline constexpr char kCheckpointMagic[8] = {'R', 'I', 'S', 'C', 'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using Metadata = std::map<std::string, std::string>;

namespace detail {
template <class T>
void write_array(io::Writer& w, const std::vector<T>& a) {
  for (const T v : a) {
    if constexpr (sizeof(T) == 4)
      w.f32(static_cast<float>(v));
    else
      w.f64(static_cast<double>(v));
  }
}
template <class T>
void read_array(io::Reader& r, std::vector<T>& a, std::size_t n) {
  a.resize(n);
  for (auto& v : a) {
    if constexpr (sizeof(T) == 4)
      v = static_cast<T>(r.f32());
    else
      v = static_cast<T>(r.f64());
  }
}
}  // namespace detail

template <class T>
void write_checkpoint(const std::string& path, const ParamStore<T>& store, const Metadata& meta) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  io::Writer w(path);
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(sizeof(T));
  w.u64(store.step);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u64(d);
    detail::write_array(w, p.value);
    detail::write_array(w, p.m);
    detail::write_array(w, p.v);
  }
  w.close();
}

template <class T>
struct Checkpoint {
  ParamStore<T> store;
  Metadata meta;
};

template <class T>
Checkpoint<T> read_checkpoint(const std::string& path) {
  io::Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw FormatError("'" + path + "' is not a checkpoint (bad magic)");
  if (r.u32() != kCheckpointVersion) throw FormatError("'" + path + "': unsupported version");
  if (r.u32() != sizeof(T)) throw FormatError("'" + path + "': scalar width mismatch");
  Checkpoint<T> ck;
  const auto step = r.u64();
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto key = r.str();
    ck.meta[key] = r.str();
  }
  const auto n_param = r.u32();
  for (std::uint32_t i = 0; i < n_param; ++i) {
    auto name = r.str();
    const auto rank = r.u32();
    if (rank > 8) throw FormatError("'" + path + "': implausible rank for '" + name + "'");
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.u64());
      count *= d;
    }
    if (count * sizeof(T) * 3 > r.remaining())
      throw TruncationError("'" + path + "': payload shorter than declared for '" + name + "'");
    std::vector<T> value;
    detail::read_array(r, value, count);
    const auto idx = ck.store.add(std::move(name), std::move(shape), std::move(value));
    detail::read_array(r, ck.store[idx].m, count);
    detail::read_array(r, ck.store[idx].v, count);
  }
  ck.store.step = step;
  return ck;
}

}  // namespace risce::nn
