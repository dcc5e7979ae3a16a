#pragma once

// Shared fixtures and independent oracles for the unit tests. Nothing here
// calls the routine it is used to check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "petbench/core.hpp"
#include "petbench/rng.hpp"

namespace petbench::testing {

inline Matrix rows(std::vector<std::vector<double>> r) { return Matrix::from_rows(r); }

inline RewardTable random_reward(std::size_t nx, std::size_t na, double bound, Rng& rng,
                                 double shrink = 1.0) {
  Matrix m(nx, na);
  for (double& v : m.data()) v = rng.uniform(-bound, bound) * shrink;
  return RewardTable(std::move(m), bound);
}

inline TabularPolicy random_policy(std::size_t nx, std::size_t na, Rng& rng) {
  Matrix w(nx, na);
  for (double& v : w.data()) v = rng.uniform(0.05, 1.0);
  return TabularPolicy::normalized(std::move(w));
}

inline Distribution random_distribution(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  double s = 0.0;
  for (double& v : p) s += (v = rng.uniform(0.1, 1.0));
  for (double& v : p) v /= s;
  return Distribution(std::move(p));
}

inline PreferenceDataset random_dataset(std::size_t nx, std::size_t na, std::size_t n, Rng& rng) {
  std::vector<PreferenceTuple> t;
  for (std::size_t i = 0; i < n; ++i)
    t.push_back({rng.index(nx), rng.index(na), rng.index(na), rng.bernoulli(0.5) ? 1 : 0});
  return PreferenceDataset(PromptSpace{nx}, ResponseSpace{na}, std::move(t));
}

// Naive per-tuple negative log-likelihood using log1p(exp(-y)), the textbook
// form of -log sigmoid(y).
inline double naive_nll(double y) { return std::log1p(std::exp(-y)); }

inline double naive_loss(const RewardTable& r, const PreferenceDataset& d) {
  double s = 0.0;
  for (const auto& t : d.tuples()) {
    const double diff = r(t.x, t.a1) - r(t.x, t.a2);
    s += naive_nll(t.sigma == 1 ? diff : -diff);
  }
  return s;
}

template <class F>
Matrix central_difference(F&& loss, const RewardTable& at, double h = 1e-5) {
  Matrix g(at.n_prompts(), at.n_responses());
  Matrix v = at.values();
  for (std::size_t i = 0; i < v.data().size(); ++i) {
    const double o = v.data()[i];
    v.data()[i] = o + h;
    const double up = loss(RewardTable(v, at.bound() + 1.0));
    v.data()[i] = o - h;
    const double dn = loss(RewardTable(v, at.bound() + 1.0));
    v.data()[i] = o;
    g.data()[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Matrix& a, const Matrix& b) {
  double num = 0.0, den = 1e-12;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    num = std::max(num, std::abs(a.data()[i] - b.data()[i]));
    den = std::max({den, std::abs(a.data()[i]), std::abs(b.data()[i])});
  }
  return num / den;
}

inline double row_tv(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

// Best-of-n distribution by enumerating all |A|^n draw sequences with the
// first-maximizer rule.
inline std::vector<double> enumerate_best_of_n(std::span<const double> base,
                                               std::span<const double> reward, std::size_t n) {
  const std::size_t na = base.size();
  std::vector<double> out(na, 0.0);
  std::vector<std::size_t> seq(n, 0);
  while (true) {
    double p = 1.0;
    std::size_t best = seq[0];
    for (std::size_t i = 0; i < n; ++i) {
      p *= base[seq[i]];
      if (reward[seq[i]] > reward[best]) best = seq[i];
    }
    out[best] += p;
    std::size_t k = 0;
    while (k < n && ++seq[k] == na) seq[k++] = 0;
    if (k == n) break;
  }
  return out;
}

}  // namespace petbench::testing
