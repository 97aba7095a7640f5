#pragma once

#include <cstdint>
#include <random>

namespace evnet {

// Seeded generator with a platform-independent uniform draw. std::uniform_real_distribution
// is implementation-defined, which would break byte-identical outputs across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  // Derive an independent stream for a sub-task.
  Rng split(std::uint64_t tag) {
    std::uint64_t s = engine_() ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    return Rng(s);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace evnet
