#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace petbench {

// mt19937_64 with hand-rolled uniform and categorical draws, so that streams
// are identical across standard libraries (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
  std::size_t index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Inverse-CDF draw from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

/// Repeated categorical draws from a fixed weight vector via binary search
/// on the cumulative sums.
class CdfSampler {
 public:
  explicit CdfSampler(std::span<const double> weights);

  std::size_t operator()(Rng& rng) const;

 private:
  std::vector<double> cdf_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Sub-seed derivation used by every stage: splitmix64(seed ^ fnv1a64(stage)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

}  // namespace petbench
