#pragma once

// Coverage coefficients and the finite-sample performance-gap bound for the
// best-of-n policy of a pessimistic reward.
//
// With d = r* - r, pi the target policy and pi_ref the reference:
//
//   num(r) = E_{x~mu, a1~pi, a2~pi_ref} [ d(x,a1) - d(x,a2) ]
//   den(r) = E_{(x,a1,a2)~mu_D} [ (d(x,a1) - d(x,a2))^2 ]
//   C      = max(0, sup_r num(r) / sqrt(den(r)))
//
// The ratio is scale-free in d. It is unbounded exactly when pi puts weight on
// reward differences that mu_D never observes.

#include <cstdint>
#include <vector>

#include "petbench/core.hpp"
#include "petbench/pet.hpp"
#include "petbench/worldgen.hpp"

namespace petbench {

inline constexpr double kCoverageUnboundedThreshold = 1e6;

struct CoverageEstimate {
  /// Best ratio found, clipped at 0; +inf when flagged unbounded.
  double value = 0.0;
  bool unbounded = false;
  RewardTable argmax_reward;
  /// Best ratio reached by each start, in start order.
  std::vector<double> start_values;
  std::size_t evaluations = 0;
};

struct CoverageOptions {
  std::size_t n_starts = 32;
  std::size_t max_iters = 400;
  std::uint64_t seed = 0;
};

/// Ratio num(r) / sqrt(den(r)) for a single challenger. 0/0 counts as 0,
/// positive/0 as +inf.
double coverage_ratio(const RewardTable& r, const TabularPolicy& pi, const World& world);

/// Multi-start projected gradient ascent of coverage_ratio over [-R, R]^{X x A}.
CoverageEstimate coverage_coefficient(const TabularPolicy& pi, const World& world,
                                      const CoverageOptions& opts = {});

/// max(0, max over an explicit finite reward class).
CoverageEstimate coverage_over_class(const TabularPolicy& pi, const World& world,
                                     const std::vector<RewardTable>& reward_class);

/// log of the sup-norm covering number of [-R, R]^dim by an epsilon grid.
double covering_log(std::size_t dim, double bound, double epsilon);

/// beta = sqrt(N) (1 + e^R)^2 / (2 sqrt(6) sqrt(log(N_eps / delta))), where
/// log(N_eps / delta) = covering_log + log(1 / delta). This coefficient weights
/// the summed prediction loss.
double theorem_beta(std::size_t n_data, double bound, double log_covering, double delta);

/// (1 + e^R)^2 (C^2 + 1) sqrt(6 log(N_eps / delta)) / (4 sqrt(N)); +inf when C is.
double theorem_bound(double coverage, std::size_t n_data, double bound, double log_covering,
                     double delta);

/// Pre-substitution form C^2 / (8 kappa^2 beta) + 3 beta log(N_eps / delta) / N,
/// kappa = (1 + e^R)^-2. Equals theorem_bound at beta = theorem_beta.
double theorem_bound_at_beta(double coverage, std::size_t n_data, double bound,
                             double log_covering, double delta, double beta);

/// V_{r*}(pi_RS(pi0, challenger, n)) - V_{r*}(pi_RS(pi0, r_hat, n)).
double empirical_gap(const World& world, const RewardTable& r_hat, const RewardTable& challenger,
                     std::size_t n);

struct BoundReport {
  double beta_star = 0.0;
  double rhs = 0.0;
  double gap_empirical = 0.0;
  double covering_log = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  std::size_t n_data = 0;
  double bound = 0.0;
  double coverage = 0.0;
  bool coverage_unbounded = false;
  bool holds = true;  // gap_empirical <= rhs
};

/// Default covering resolution: epsilon = 1 / N.
double default_epsilon(std::size_t n_data);

BoundReport bound_report(const World& world, const RewardTable& r_hat,
                         const RewardTable& challenger, std::size_t n_data, double delta,
                         std::size_t n, const CoverageEstimate& coverage);

/// Exact-mode PET settings that solve the pessimistic objective with the
/// theorem's coefficient: beta = theorem_beta * N in per-tuple units and a step
/// size well inside the stability limit of the prediction term.
PetConfig theorem_pet_config(std::size_t n_data, double bound, double log_covering, double delta,
                             std::size_t n);

}  // namespace petbench
