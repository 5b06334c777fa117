#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string_view>

namespace triage {

// Platform-independent 64-bit hashing: FNV-1a over the input bytes, then the
// splitmix64 finalizer so every output bit depends on every input bit.
// Values produced here are persisted in regression tests; never change them.

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

class StableHasher {
 public:
  constexpr StableHasher& bytes(std::span<const std::uint8_t> data) noexcept {
    for (auto b : data) {
      state_ ^= b;
      state_ *= kFnvPrime;
    }
    return *this;
  }

  constexpr StableHasher& text(std::string_view s) noexcept {
    for (char c : s) {
      state_ ^= static_cast<std::uint8_t>(c);
      state_ *= kFnvPrime;
    }
    return *this;
  }

  // Little-endian, fixed width.
  constexpr StableHasher& u64(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
      state_ ^= static_cast<std::uint8_t>(v >> (8 * i));
      state_ *= kFnvPrime;
    }
    return *this;
  }

  constexpr StableHasher& i32(std::int32_t v) noexcept {
    auto u = static_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
      state_ ^= static_cast<std::uint8_t>(u >> (8 * i));
      state_ *= kFnvPrime;
    }
    return *this;
  }

  constexpr std::uint64_t digest() const noexcept { return mix64(state_); }

 private:
  std::uint64_t state_ = kFnvOffset;
};

constexpr std::uint64_t stable_hash(std::string_view s) noexcept {
  return StableHasher{}.text(s).digest();
}

/// Maps a hash onto [0, 1) as h / 2^64.
constexpr double unit_interval(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Maps a hash strictly inside (0, 1). The top bucket would round to 1.0 and
/// is held at the largest double below 1.
constexpr double open_unit_interval(std::uint64_t h) noexcept {
  return std::min((static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53, 0x1.fffffffffffffp-1);
}

}  // namespace triage
