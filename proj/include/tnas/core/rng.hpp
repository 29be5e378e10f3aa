#pragma once

#include <cstdint>
#include <random>

namespace tnas {

/// Seeded random stream with platform-independent conversions.
///
/// std::uniform_real_distribution and friends are implementation-defined, so
/// draws are derived here from the raw 64-bit engine output to keep runs
/// replayable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// [0, 1) with 53 random bits.
  double uniform();
  /// (0, 1), never exactly zero; safe under log.
  double uniform_open();
  double normal();
  /// Uniform integer in [0, n); rejection sampling, no modulo bias.
  std::int64_t uniform_int(std::int64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream derived from this seed and a stream id.
  Rng split(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace tnas
