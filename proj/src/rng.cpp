#include "petbench/rng.hpp"

#include <algorithm>

#include "petbench/error.hpp"

namespace petbench {

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::Parameter, "Rng::index with n = 0");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error(ErrorKind::Parameter, "categorical draw from zero total mass");
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  // Rounding can leave u == acc at the very end.
  return last_positive;
}

CdfSampler::CdfSampler(std::span<const double> weights) : cdf_(weights.size()) {
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw Error(ErrorKind::Parameter, "negative sampling weight");
    acc += weights[i];
    cdf_[i] = acc;
  }
  if (!(acc > 0.0)) throw Error(ErrorKind::Parameter, "sampling weights have zero total mass");
}

std::size_t CdfSampler::operator()(Rng& rng) const {
  const double u = rng.uniform() * cdf_.back();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  // Skip zero-weight entries that share the cumulative value.
  auto idx = static_cast<std::size_t>(it - cdf_.begin());
  while (idx > 0 && cdf_[idx] == cdf_[idx - 1]) --idx;
  return idx;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ h);
}

}  // namespace petbench
