#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "knockoff/errors.hpp"

namespace knockoff {

/// Deterministic random stream keyed by (base_seed, stream_index).
///
/// Distinct stream indices under one base seed give statistically
/// independent sequences, which is what lets replications run on any
/// number of workers while producing identical output. All variate
/// transforms are written out explicitly (rather than relying on
/// std::*_distribution, whose algorithms are implementation-defined)
/// so that a given (seed, index) pair yields the same bytes everywhere.
class RngStream {
 public:
  explicit RngStream(std::uint64_t base_seed, std::uint64_t stream_index = 0)
      : base_seed_(base_seed),
        stream_index_(stream_index),
        engine_(mix(base_seed, stream_index)) {}

  std::uint64_t base_seed() const { return base_seed_; }
  std::uint64_t stream_index() const { return stream_index_; }

  /// The 64-bit key this stream was seeded with (recorded in output files).
  std::uint64_t seed_key() const { return mix(base_seed_, stream_index_); }

  /// Derive a child stream; children with distinct k are independent of
  /// each other and of this stream.
  RngStream substream(std::uint64_t k) const { return RngStream(seed_key(), k + 1); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in {lo, ..., hi}, inclusive, bias-free by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw InvalidParams("uniform_int: requires lo <= hi");
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t draw;
    do {
      draw = next_u64();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % range);
  }

  /// Standard normal via the Box-Muller transform (pairs are cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));  // u1 in [0,1) keeps the log finite
    const double theta = 2.0 * kPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Gamma(shape, scale = 1) via Marsaglia-Tsang squeeze with the
  /// standard boost for shape < 1.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw InvalidParams("gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Beta(a, b) as a ratio of gammas.
  double beta(double a, double b) {
    const double ga = gamma(a);
    const double gb = gamma(b);
    const double sum = ga + gb;
    return sum > 0.0 ? ga / sum : 0.5;
  }

  /// Bernoulli(prob) as 0/1.
  int bernoulli(double prob) { return uniform() < prob ? 1 : 0; }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  /// SplitMix64-style avalanche combining seed and stream index.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t base_seed_;
  std::uint64_t stream_index_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace knockoff
