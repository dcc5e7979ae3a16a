#pragma once

#include <cstdint>
#include <string_view>

#include "petbench/core.hpp"
#include "petbench/worldgen.hpp"

namespace petbench {

enum class OptMethod { GreedyExact, KlClosedForm, PolicyGradient };

std::string_view to_string(OptMethod m);
OptMethod parse_opt_method(std::string_view s);

struct OptConfig {
  /// KL weight; 0 means unregularized.
  double eta = 0.0;
  OptMethod method = OptMethod::GreedyExact;
  std::size_t pg_steps = 3000;
  std::size_t pg_batch = 256;
  double pg_lr = 0.5;
  /// Surrogate epochs per sampled batch.
  std::size_t pg_epochs = 4;
  double clip_epsilon = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Point mass on argmax_a r(x, a); ties go to the lowest response index.
TabularPolicy greedy_policy(const RewardTable& r);

/// Maximizer of V_r(pi) - eta * KL_mu(pi || pi_ref): pi ∝ pi_ref * exp(r / eta).
TabularPolicy kl_optimal_policy(const RewardTable& r, const TabularPolicy& pi_ref, double eta);

/// V_r(pi) - eta * KL_mu(pi || pi_ref). Infinite KL yields -inf when eta > 0.
double regularized_objective(const RewardTable& r, const TabularPolicy& pi,
                             const TabularPolicy& pi_ref, const Distribution& mu, double eta);

/// Clipped-ratio policy gradient on tabular softmax logits, started at pi_ref
/// and restricted to its support. Advantages are rewards minus the per-prompt
/// expected reward of the behaviour policy; the KL penalty enters the
/// objective analytically. The step size anneals linearly to zero.
TabularPolicy pg_optimize(const RewardTable& r, const TabularPolicy& pi_ref, const World& world,
                          const OptConfig& cfg);

/// Runs whichever method cfg selects.
TabularPolicy optimize_policy(const RewardTable& r, const World& world, const OptConfig& cfg);

struct EvalRow {
  double v_true = 0.0;
  double v_proxy = 0.0;
  double v_pet = 0.0;
  /// KL_mu(pi || pi_ref); NaN when pi leaves the reference support.
  double kl_to_ref = 0.0;
  bool kl_support_ok = true;
};

EvalRow evaluate_policy(const TabularPolicy& pi, const World& world, const RewardTable& proxy,
                        const RewardTable& pet);

/// Largest per-prompt total variation distance between two policies.
double max_row_tv(const TabularPolicy& a, const TabularPolicy& b);

}  // namespace petbench
