#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace handuse {

/// 64-bit FNV-1a. Used for configuration and feature-layout fingerprints.
class Fnv1a {
 public:
  Fnv1a& add(std::string_view bytes) noexcept;
  Fnv1a& add(std::uint64_t v) noexcept;
  Fnv1a& add(double v) noexcept;
  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Hex rendering used wherever a hash is serialized.
std::string to_hex(std::uint64_t v);
std::uint64_t from_hex(std::string_view s);

/// SplitMix64 step; derives independent per-tree and per-fold seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace handuse
