#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace capcheck::rng {

// All randomness in this project flows through this header. The engine is
// std::mt19937_64, whose output sequence is fixed by the C++ standard, and
// every variate mapping below is written out explicitly instead of relying
// on std::*_distribution (whose algorithms are implementation-defined).
// A (seed, draw-order) pair therefore identifies a value sequence exactly,
// independent of standard library vendor.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// SplitMix64 finalizer; used for deriving independent sub-seeds.
inline std::uint64_t split_mix(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derives the seed of an independent named stream from a base seed.
/// Distinct stream ids give statistically unrelated generators.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return split_mix(base ^ (stream * kGolden));
}

// Stream ids used by the problem generator (documented in the README).
inline constexpr std::uint64_t kStreamWeights = 1;  // generating parameters w_0
inline constexpr std::uint64_t kStreamInputs = 2;   // training inputs U
inline constexpr std::uint64_t kStreamInitialPoint = 3;  // optimizer start x_0

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform draw from the open interval (lo, hi). The endpoint rejection
  /// is what guarantees strict openness after rounding.
  double uniform(double lo, double hi) {
    for (;;) {
      const double x = lo + (hi - lo) * unit();
      if (x > lo && x < hi) return x;
    }
  }

  /// Standard normal via the Marsaglia polar method.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  // 53 random bits mapped to [0, 1); zero rejected so callers see (0, 1).
  double unit() {
    for (;;) {
      const double u =
          static_cast<double>(gen_() >> 11) * 0x1.0p-53;
      if (u != 0.0) return u;
    }
  }

  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace capcheck::rng
