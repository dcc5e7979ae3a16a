#pragma once

// Pessimistic reward fine-tuning.
//
// Objective, for a reward table r:
//
//   h(r) = V_r(pi_RS(pi0, r, n)) - V_r(pi_ref) + beta * L_D(r) / |D|
//
// The prediction term is the per-tuple mean loss, so beta is independent of
// the dataset size. The sum-form coefficient b (weighting L_D itself) maps to
// beta = b * |D|.
//
// pi_RS(r) maximizes V_r over the best-of-n class, so the derivative of h
// through the policy vanishes and each iteration only needs the gradient with
// the policy held fixed:
//
//   grad h = mu(x) * (pi_t(a|x) - pi_ref(a|x)) + beta * grad L_D / |D|.
//
// Exact mode evaluates that expression on the full dataset with pi_t computed
// in closed form. Sampled mode draws a mini-batch of M tuples, one best-of-n
// response and one reference response per tuple, and descends on the single
// draw estimate; its expectation is the exact-mode loss on the data's prompts.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "petbench/core.hpp"
#include "petbench/rng.hpp"
#include "petbench/worldgen.hpp"

namespace petbench {

enum class PetMode { Exact, Sampled };

std::string_view to_string(PetMode m);
PetMode parse_pet_mode(std::string_view s);

struct PetConfig {
  double beta = 10.0;
  std::size_t n = 64;
  std::size_t iterations = 500;
  std::size_t batch_size = 64;
  double learning_rate = 5e-2;
  PetMode mode = PetMode::Exact;
  /// Stop early once the largest per-cell update falls below this. 0 disables.
  double tolerance = 0.0;
  std::uint64_t seed = 0;

  void validate(std::size_t dataset_size) const;
};

/// Exact-mode loss with pi_t held fixed; `batch` supplies the prediction term.
LossGrad pet_loss_exact(const RewardTable& r, const TabularPolicy& pi_t,
                        const TabularPolicy& pi_ref, const Distribution& mu,
                        const PreferenceDataset& batch, double beta);
/// Same loss with the prediction term taken from pre-aggregated counts.
LossGrad pet_loss_exact(const RewardTable& r, const TabularPolicy& pi_t,
                        const TabularPolicy& pi_ref, const Distribution& mu,
                        const WinCounts& counts, double beta);

/// One item of a sampled mini-batch.
struct PetDraw {
  PreferenceTuple tuple;
  std::size_t response = 0;      // best-of-n draw for tuple.x
  std::size_t ref_response = 0;  // reference draw for tuple.x
};

/// Mini-batch of `m` tuples drawn with replacement from `data`, each paired with
/// a best-of-n response on `r` and a reference response.
std::vector<PetDraw> draw_pet_batch(const PreferenceDataset& data, const TabularPolicy& pi0,
                                    const RewardTable& r, std::size_t n,
                                    const TabularPolicy& pi_ref, std::size_t m, Rng& rng);

/// (1/M) * sum_i [ r(x_i, a_i) - r(x_i, a_ref_i) + beta * loss_i(r) ].
LossGrad pet_loss_sampled(const RewardTable& r, std::span<const PetDraw> draws, double beta);

struct PetIteration {
  std::size_t t = 0;
  double pess_loss = 0.0;  // h(r^t) on the full dataset
  double pred_loss = 0.0;  // per-tuple prediction loss
  double value_gap = 0.0;  // V_r(pi_RS(r)) - V_r(pi_ref)
};

struct PetResult {
  RewardTable reward;
  std::vector<PetIteration> trace;
  std::size_t iterations_run = 0;
};

PetResult pet_finetune(const World& world, const PreferenceDataset& data,
                       const RewardTable& r_init, const PetConfig& cfg);

struct PessimismCertificate {
  double score_pet = 0.0;    // S(r_pet)
  double score_proxy = 0.0;  // S(proxy)
  double loss_pet = 0.0;     // per-tuple prediction loss
  double loss_proxy = 0.0;
  bool pet_more_pessimistic = true;  // S(r_pet) <= S(proxy)
};

/// Relative score S(r) = V_r(pi_RS(pi0, r, n)) - V_r(pi_ref) for both rewards.
double relative_score(const RewardTable& r, const World& world, std::size_t n);

PessimismCertificate pessimism_certificate(const RewardTable& r_pet, const RewardTable& proxy,
                                           const World& world, const PreferenceDataset& data,
                                           std::size_t n);

}  // namespace petbench
