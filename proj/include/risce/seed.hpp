#pragma once

#include <cstdint>
#include <initializer_list>

namespace risce {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent child seed for a (parent, tag...) path.
constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t s = mix64(parent);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632BE59BD9B4E019ull));
  return s;
}

}  // namespace risce
