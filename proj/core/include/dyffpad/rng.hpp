#pragma once

#include <cstdint>
#include <random>

namespace dyffpad {

/// Portable draws on top of mt19937_64. The std distributions are
/// implementation-defined, so they are not used anywhere results must repeat.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; derives independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace dyffpad
