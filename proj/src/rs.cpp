#include "petbench/rs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "petbench/error.hpp"

namespace petbench {

void RsSpec::validate() const {
  if (n == 0) throw Error(ErrorKind::Parameter, "rejection sampling needs n >= 1");
  if (base.n_prompts() != reward.n_prompts() || base.n_responses() != reward.n_responses())
    throw Error(ErrorKind::Shape, "rejection sampling: base policy and reward shapes differ");
}

std::size_t rs_sample(const RsSpec& spec, std::size_t x, Rng& rng) {
  if (x >= spec.base.n_prompts()) throw Error(ErrorKind::Range, "rs_sample: prompt out of range");
  const auto row = spec.base.row(x);
  std::size_t best = rng.categorical(row);
  double best_reward = spec.reward(x, best);
  for (std::size_t i = 1; i < spec.n; ++i) {
    const std::size_t a = rng.categorical(row);
    // Strict comparison keeps the earliest maximizer.
    if (spec.reward(x, a) > best_reward) {
      best = a;
      best_reward = spec.reward(x, a);
    }
  }
  return best;
}

TabularPolicy rs_exact_policy(const RsSpec& spec) {
  spec.validate();
  const std::size_t na = spec.base.n_responses();
  const double n = static_cast<double>(spec.n);
  Matrix out(spec.base.n_prompts(), na);
  std::vector<std::size_t> order(na);
  for (std::size_t x = 0; x < spec.base.n_prompts(); ++x) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      return spec.reward(x, i) < spec.reward(x, j);
    });
    double below = 0.0;
    for (std::size_t g = 0; g < na;) {
      std::size_t end = g;
      double mass = 0.0;
      while (end < na && spec.reward(x, order[end]) == spec.reward(x, order[g])) {
        mass += spec.base.prob(x, order[end]);
        ++end;
      }
      if (mass > 0.0) {
        const double hit = std::pow(below + mass, n) - std::pow(below, n);
        for (std::size_t k = g; k < end; ++k)
          out(x, order[k]) = spec.base.prob(x, order[k]) / mass * hit;
      }
      below += mass;
      g = end;
    }
    // The group masses telescope to below^n; remove the rounding residue.
    auto row = out.row(x);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= total;
  }
  return TabularPolicy(std::move(out));
}

TabularPolicy rs_policy(const TabularPolicy& base, const RewardTable& reward, std::size_t n) {
  return rs_exact_policy(RsSpec{base, reward, n});
}

void RsOptimalityReport::require() const {
  if (!holds)
    throw Error(ErrorKind::PropertyViolation,
                fmt::format("best-of-n optimality violated: minimum margin {:.3e}", min_margin));
}

RsOptimalityReport verify_proposition1(const TabularPolicy& base, const RewardTable& r0, std::size_t n,
                                const std::vector<RewardTable>& challengers,
                                const Distribution& mu) {
  if (challengers.empty()) throw Error(ErrorKind::Parameter, "verify_proposition1: no challengers");
  RsOptimalityReport rep;
  rep.self_value = value(r0, rs_policy(base, r0, n), mu);
  rep.min_margin = INFINITY;
  for (const auto& c : challengers) {
    const double v = value(r0, rs_policy(base, c, n), mu);
    rep.challenger_values.push_back(v);
    rep.margins.push_back(rep.self_value - v);
    rep.min_margin = std::min(rep.min_margin, rep.margins.back());
  }
  rep.holds = rep.min_margin >= -kRsOptimalityTolerance;
  return rep;
}

}  // namespace petbench
