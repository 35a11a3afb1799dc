#pragma once

// Little-endian binary stream helpers shared by the dataset and checkpoint
// containers.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>

#include "risce/error.hpp"

namespace risce::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <class U>
U to_little(U v) {
  static_assert(std::is_unsigned_v<U>);
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | (v & 0xFF));
      v = static_cast<U>(v >> 8);
    }
    return out;
  } else {
    return v;
  }
}

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed on '" + path_ + "'");
  }

  void u32(std::uint32_t v) { put(to_little(v)); }
  void u64(std::uint64_t v) { put(to_little(v)); }
  void f32(float v) { put(to_little(std::bit_cast<std::uint32_t>(v))); }
  void f64(double v) { put(to_little(std::bit_cast<std::uint64_t>(v))); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("close failed on '" + path_ + "'");
  }

 private:
  template <class U>
  void put(U v) {
    bytes(&v, sizeof(U));
  }

  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "' for reading");
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  std::uint64_t size() const noexcept { return size_; }
  std::uint64_t remaining() { return size_ - static_cast<std::uint64_t>(in_.tellg()); }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw TruncationError("unexpected end of file in '" + path_ + "'");
  }

  std::uint32_t u32() { return to_little(get<std::uint32_t>()); }
  std::uint64_t u64() { return to_little(get<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t max_len = 1 << 16) {
    const auto n = u32();
    if (n > max_len) throw FormatError("string field too long in '" + path_ + "'");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  template <class U>
  U get() {
    U v;
    bytes(&v, sizeof(U));
    return v;
  }

  std::string path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
};

}  // namespace risce::io
