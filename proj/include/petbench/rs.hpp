#pragma once

// Rejection sampling (best-of-n): draw n responses from a base policy and keep
// the one the reward model scores highest.
//
// Besides the sampler, rs_exact_policy computes the induced policy in closed
// form. Sort a prompt's responses by reward and group exact ties. With F the
// base mass strictly below a group and q the group's mass, the best draw lands
// in the group with probability (F + q)^n - F^n. Draws are exchangeable, so
// inside the group the mass splits in proportion to the base policy.

#include <cstddef>
#include <vector>

#include "petbench/core.hpp"
#include "petbench/rng.hpp"

namespace petbench {

struct RsSpec {
  TabularPolicy base;
  RewardTable reward;
  std::size_t n = 1;

  void validate() const;
};

/// One best-of-n draw for prompt x. Ties go to the earliest draw.
std::size_t rs_sample(const RsSpec& spec, std::size_t x, Rng& rng);

TabularPolicy rs_exact_policy(const RsSpec& spec);

/// Convenience: rs_exact_policy({base, reward, n}).
TabularPolicy rs_policy(const TabularPolicy& base, const RewardTable& reward, std::size_t n);

struct RsOptimalityReport {
  /// V_{r0}(pi_RS(base, r0, n)).
  double self_value = 0.0;
  /// V_{r0}(pi_RS(base, challenger_i, n)).
  std::vector<double> challenger_values;
  /// self_value - challenger_values[i].
  std::vector<double> margins;
  double min_margin = 0.0;
  bool holds = true;

  /// Throws PropertyViolation when some margin is below -tolerance.
  void require() const;
};

inline constexpr double kRsOptimalityTolerance = 1e-9;

/// Checks that best-of-n on r0 is the best best-of-n policy as judged by r0.
RsOptimalityReport verify_proposition1(const TabularPolicy& base, const RewardTable& r0, std::size_t n,
                                const std::vector<RewardTable>& challengers,
                                const Distribution& mu);

}  // namespace petbench
