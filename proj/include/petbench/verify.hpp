#pragma once

// Property suites with fixed seeds. Each property reports a margin: how far
// the measured quantity sits inside its tolerance (negative means failure).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "petbench/core.hpp"
#include "petbench/pet.hpp"

namespace petbench {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double margin = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 20240607;
  std::size_t rs_optimality_cases = 200;
  std::size_t rs_specs = 10;
  std::size_t rs_draws = 1'000'000;
  std::size_t grad_instances = 50;
  std::size_t theorem_worlds = 20;
  std::size_t theorem_min_holds = 18;
};

/// Largest ||g_fd - g||_inf / max(||g_fd||_inf, ||g||_inf, 1e-12) seen over
/// central differences with step h.
struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

using LossFn = std::function<LossGrad(const RewardTable&)>;

GradCheck check_gradient(const LossFn& f, const RewardTable& at, double h = 1e-5);

inline constexpr double kGradTolerance = 1e-5;

/// Signature of the exact PET loss; replaceable so a broken gradient can be
/// fed to the gradient property.
using PetLossExactFn =
    std::function<LossGrad(const RewardTable&, const TabularPolicy&, const TabularPolicy&,
                           const Distribution&, const PreferenceDataset&, double)>;

PetLossExactFn default_pet_loss_exact();

PropertyResult verify_rs_optimality(const VerifyOptions& opts);
PropertyResult verify_rs_monte_carlo(const VerifyOptions& opts);
PropertyResult verify_prediction_gradient(const VerifyOptions& opts);
PropertyResult verify_pet_gradient(const VerifyOptions& opts,
                                   const PetLossExactFn& loss = default_pet_loss_exact());
PropertyResult verify_pet_sampled_gradient(const VerifyOptions& opts);
PropertyResult verify_theorem_smoke(const VerifyOptions& opts);

struct VerifySummary {
  std::vector<PropertyResult> results;
  bool all_passed = true;
};

/// Runs every suite and prints one line per property to `log`.
VerifySummary cmd_verify(const VerifyOptions& opts, std::ostream& log);

/// "PASS <name> margin=<m> <detail>" or the FAIL variant.
std::string format_property(const PropertyResult& r);

}  // namespace petbench
