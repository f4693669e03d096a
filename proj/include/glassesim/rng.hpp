#pragma once

#include <cmath>
#include <cstdint>

namespace glassesim {

// Counter-based normal variates: every sample is a pure function of
// (seed, stream, frame, index), so results do not depend on visiting order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t frame)
      : key_(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) ^ mix(stream * 0x9e3779b97f4a7c15ULL + 1) ^
                 mix(frame * 0xbf58476d1ce4e5b9ULL + 2))) {}

  /// Uniform in (0, 1].
  double uniform(std::uint64_t index, std::uint64_t lane = 0) const {
    const std::uint64_t bits = mix(key_ ^ mix(index * 2 + lane + 0x94d049bb133111ebULL));
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double normal(std::uint64_t index) const {
    const double u1 = uniform(index, 0);
    const double u2 = uniform(index, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

}  // namespace glassesim
