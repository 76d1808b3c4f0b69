#pragma once

#include <cstdint>
#include <random>

namespace tw {

/// Seeded random stream with explicit uniform/normal conversions.
///
/// std::uniform_real_distribution and std::normal_distribution are
/// implementation-defined, so results would differ between standard
/// libraries. The engine (mt19937_64) is fully specified; the conversions
/// here are spelled out, which keeps every seeded artifact byte-stable
/// across toolchains.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 usable bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  /// Normal with the given mean and standard deviation.
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

}  // namespace tw
