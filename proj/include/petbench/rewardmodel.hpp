#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "petbench/core.hpp"

namespace petbench {

enum class RewardInit { Zero, UniformRandom, Optimistic };

std::string_view to_string(RewardInit init);
RewardInit parse_reward_init(std::string_view s);

struct TrainConfig {
  /// Step size on the per-tuple mean loss of each mini-batch.
  double learning_rate = 1.0;
  std::size_t batch_size = 256;
  std::size_t epochs = 20;
  RewardInit init = RewardInit::Optimistic;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;      // full-dataset loss per tuple
  double accuracy = 0.0;  // see proxy_loss_report
};

struct TrainResult {
  RewardTable reward;
  /// Row 0 is the initialization, then one row per epoch.
  std::vector<EpochStats> curve;
};

/// Initial table for a given init mode; `seed` only matters for UniformRandom.
RewardTable initial_reward(std::size_t n_prompts, std::size_t n_responses, double bound,
                           RewardInit init, std::uint64_t seed);

/// Projected mini-batch gradient descent on the prediction loss. Mini-batches
/// are drawn with replacement; an epoch is ceil(N / batch_size) steps. With
/// batch_size == N each epoch is one deterministic full-gradient step. Cells
/// that never occur in the data keep their initial value.
TrainResult train_proxy(const PreferenceDataset& data, double bound, const TrainConfig& cfg);

struct LossReport {
  double loss_per_tuple = 0.0;
  /// Fraction of tuples whose higher-reward response agrees with sigma; ties count 0.5.
  double accuracy = 0.0;
};

LossReport proxy_loss_report(const RewardTable& r, const PreferenceDataset& data);

}  // namespace petbench
