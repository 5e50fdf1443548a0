#pragma once

#include <cstdint>
#include <random>

namespace spinorbit {

/// Counter-based uniform stream: value(i) depends only on (seed, stream, i).
/// Lets per-pulse noise be drawn in any order and still reproduce bit-for-bit.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const;
  /// Uniform in [-half_width, half_width].
  double symmetric(std::uint64_t counter, double half_width) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// 53-bit mantissa conversion; std::uniform_real_distribution is not
/// portable bit-for-bit across standard libraries.
inline double to_unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * to_unit_double(gen());
}

// Stream identifiers used by the drive.
inline constexpr std::uint64_t kFlipNoiseStream = 1;
inline constexpr std::uint64_t kAcqJitterStream = 2;
inline constexpr std::uint64_t kReadoutNoiseStream = 3;

}  // namespace spinorbit
