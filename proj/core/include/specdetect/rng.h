#ifndef SPECDETECT_RNG_H_
#define SPECDETECT_RNG_H_

#include <cstdint>
#include <random>

namespace specdetect {

// Seeded generator whose output sequence is fixed by the seed alone.
// Distributions are computed here rather than through <random> adaptors,
// whose results are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller.
  double normal();

  // Normal with standard deviation `stddev`, resampled until |z| <= 2.
  double truncated_normal(double stddev);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 mixing of (seed, index); used to derive per-item streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace specdetect

#endif  // SPECDETECT_RNG_H_
