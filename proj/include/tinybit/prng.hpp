#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "tinybit/common.hpp"

namespace tinybit {

/// Deterministic PRNG used for every randomized step of the pipeline
/// (initialization, shuffling, cropping, mirroring, MixUp coefficients).
///
/// The generator is PCG32 (XSH-RR, 64-bit state, 32-bit output) with the
/// default stream increment, seeded the canonical way: advance from zero,
/// add the seed, advance again. Identical seeds therefore produce identical
/// streams on every platform, which is what makes whole training runs
/// byte-reproducible.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : seed_(seed) {
    state_ = 0;
    next_u32();
    state_ += seed;
    next_u32();
  }

  /// Restore a generator captured mid-stream (checkpoint resume).
  static Prng from_state(std::uint64_t seed, std::uint64_t state) {
    Prng p(seed);
    p.state_ = state;
    return p;
  }

  std::uint32_t next_u32() {
    const std::uint64_t old = state_;
    state_ = old * kMultiplier + kIncrement;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  /// Uniform double on the 2^-32 grid of [0,1).
  double next_double() { return next_u32() * 0x1.0p-32; }

  /// Uniform float in [0,1).
  float next_float() { return static_cast<float>(next_double()); }

  /// Uniform float in [lo,hi). Consumes one draw.
  float uniform(float lo, float hi) {
    return lo + (hi - lo) * static_cast<float>(next_double());
  }

  /// Uniform integer in [0,bound) via the fixed-point multiply reduction.
  std::uint32_t below(std::uint32_t bound) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(next_u32()) * bound) >> 32);
  }

  /// Two independent N(0,1) draws from one Box-Muller transform.
  /// Consumes exactly two u32 draws; u1 is shifted off zero so log() is safe.
  std::pair<float, float> normal_pair() {
    const double u1 = (next_u32() + 0.5) * 0x1.0p-32;
    const double u2 = next_u32() * 0x1.0p-32;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * kPi * u2;
    return {static_cast<float>(r * std::cos(theta)),
            static_cast<float>(r * std::sin(theta))};
  }

  /// One N(mean, stddev) draw. Uses a fresh Box-Muller pair per call and
  /// discards the second value, keeping the stream position independent of
  /// call pairing.
  float normal(float mean, float stddev) {
    return mean + stddev * normal_pair().first;
  }

  /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze; alpha < 1 is boosted with
  /// the Gamma(alpha+1) * U^(1/alpha) identity.
  double gamma(double alpha) {
    if (alpha <= 0.0) throw RangeError("gamma: alpha must be positive");
    if (alpha < 1.0) {
      const double u = (next_u32() + 0.5) * 0x1.0p-32;
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal_pair().first;
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = (next_u32() + 0.5) * 0x1.0p-32;
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Beta(a, b) as the ratio of two Gamma draws.
  double beta(double a, double b) {
    const double ga = gamma(a);
    const double gb = gamma(b);
    const double sum = ga + gb;
    if (sum == 0.0) return 0.5;  // both underflowed; any split is as good
    return ga / sum;
  }

  /// In-place Fisher-Yates shuffle, high index down.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::uint32_t j = below(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t state() const { return state_; }

 private:
  static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
  static constexpr std::uint64_t kIncrement = 0xda3e39cb94b95bdbULL;
  static constexpr double kPi = 3.14159265358979323846;

  std::uint64_t state_ = 0;
  std::uint64_t seed_ = 0;
};

/// Stable derivation of an independent stream from a base seed, used to keep
/// e.g. weight initialization and data-order draws from aliasing each other.
/// splitmix64 finalizer over (seed, salt).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace tinybit
