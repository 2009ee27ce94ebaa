#pragma once

// SplitMix64. Output i (1-based) of a stream seeded with s is
// mix64(s + i * 0x9E3779B97F4A7C15) with wrapping arithmetic, where
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   mix64(z) = z ^ (z >> 31)
// Traces and allocation orders depend on nothing else, so other
// implementations can reproduce them bit for bit.

#include <cstdint>

namespace duon {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n) by 128-bit multiply-high; n must be positive.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

// Value a write by `core` at its `event_index`-th trace event stores.
constexpr std::uint64_t write_value(std::uint32_t core,
                                    std::uint64_t event_index) {
  return mix64((std::uint64_t{core} << 48 |
                (event_index & 0xFFFFFFFFFFFFull)) +
               kGoldenGamma);
}

}  // namespace duon
