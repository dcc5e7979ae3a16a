#pragma once

// Synthetic offline-preference worlds with a known true reward.
//
// A `hackable` world removes a few responses per prompt from the support of
// the dataset pair distribution and gives them the lowest true reward in their
// row. A reward model fitted to such data cannot see those responses, so any
// optimistic value it assigns them is a planted reward-hacking opportunity.

#include <cstdint>
#include <string_view>
#include <vector>

#include "petbench/core.hpp"

namespace petbench {

enum class CoverageProfile { Full, Hackable };

std::string_view to_string(CoverageProfile p);
CoverageProfile parse_coverage_profile(std::string_view s);

struct WorldConfig {
  std::size_t n_prompts = 8;
  std::size_t n_responses = 10;
  double reward_bound = 2.0;
  CoverageProfile coverage_profile = CoverageProfile::Hackable;
  /// Responses per prompt removed from the pair distribution (hackable only).
  std::size_t n_uncovered = 2;
  /// Softmax temperature of the rejection-sampling base policy.
  double base_temperature = 1.5;
  /// Softmax temperature of the reference policy.
  double ref_temperature = 0.25;
  std::uint64_t seed = 0;

  /// Throws Config on invalid combinations.
  void validate() const;
};

struct World {
  PromptSpace prompts;
  ResponseSpace responses;
  RewardTable true_reward;
  Distribution mu;
  PairDistribution pair_dist;
  TabularPolicy pi_ref;
  TabularPolicy pi0;
  std::uint64_t seed = 0;
  /// Per prompt, the responses that carry no pair-distribution mass.
  std::vector<std::vector<std::size_t>> uncovered;
  WorldConfig config;

  bool is_uncovered(std::size_t x, std::size_t a) const;
};

World make_world(const WorldConfig& cfg);

/// N tuples drawn i.i.d. from the pair distribution with Bradley-Terry labels
/// under the true reward. Throws EmptyData when n == 0.
PreferenceDataset sample_dataset(const World& w, std::size_t n, std::uint64_t seed);

/// Softmax of `scores / temperature` over the responses where `mask` is true.
std::vector<double> masked_softmax(std::span<const double> scores, double temperature,
                                   const std::vector<bool>& mask);

}  // namespace petbench
