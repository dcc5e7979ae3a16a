#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "petbench/verify.hpp"
#include "test_util.hpp"

namespace petbench {
namespace {

VerifyOptions light() {
  VerifyOptions o;
  o.rs_optimality_cases = 40;
  o.rs_specs = 3;
  o.rs_draws = 200'000;
  o.grad_instances = 10;
  o.theorem_worlds = 4;
  o.theorem_min_holds = 4;
  return o;
}

TEST(CheckGradient, ExactOnQuadratic) {
  const RewardTable at(testing::rows({{0.3, -0.2}, {1.0, 0.5}}), 2.0);
  const auto chk = check_gradient(
      [](const RewardTable& r) {
        LossGrad lg{0.0, Matrix(2, 2)};
        for (std::size_t i = 0; i < 4; ++i) {
          const double v = r.values().data()[i];
          lg.loss += 0.5 * (i + 1) * v * v;
          lg.grad.data()[i] = (i + 1) * v;
        }
        return lg;
      },
      at);
  EXPECT_LT(chk.max_rel_error, 1e-9);
}

TEST(CheckGradient, DetectsWrongGradient) {
  const RewardTable at(testing::rows({{0.3, -0.2}}), 2.0);
  const auto chk = check_gradient(
      [](const RewardTable& r) {
        LossGrad lg{0.0, Matrix(1, 2)};
        for (std::size_t i = 0; i < 2; ++i) {
          const double v = r.values().data()[i];
          lg.loss += std::sin(v);
          lg.grad.data()[i] = 2.0 * std::cos(v);
        }
        return lg;
      },
      at);
  EXPECT_GT(chk.max_rel_error, 0.1);
}

TEST(Verify, LightSuitePasses) {
  std::ostringstream log;
  const auto s = cmd_verify(light(), log);
  EXPECT_TRUE(s.all_passed) << log.str();
  EXPECT_EQ(s.results.size(), 6u);
  for (const auto& r : s.results) EXPECT_GE(r.margin, 0.0) << r.name;
  EXPECT_NE(log.str().find("PASS rs_self_optimality"), std::string::npos);
}

TEST(Verify, FlippedPetGradientFails) {
  const auto base = default_pet_loss_exact();
  const PetLossExactFn flipped = [base](const RewardTable& r, const TabularPolicy& pi_t,
                                        const TabularPolicy& pi_ref, const Distribution& mu,
                                        const PreferenceDataset& d, double beta) {
    LossGrad lg = base(r, pi_t, pi_ref, mu, d, beta);
    lg.grad *= -1.0;
    return lg;
  };
  const auto r = verify_pet_gradient(light(), flipped);
  EXPECT_FALSE(r.passed);
  EXPECT_LT(r.margin, 0.0);
}

TEST(Verify, DeterministicAcrossCalls) {
  const auto o = light();
  const auto a = verify_rs_monte_carlo(o);
  const auto b = verify_rs_monte_carlo(o);
  EXPECT_EQ(a.margin, b.margin);
  EXPECT_EQ(a.detail, b.detail);
}

TEST(Verify, FormatProperty) {
  const PropertyResult p{"x", false, -0.5, "d=1"};
  EXPECT_EQ(format_property(p), "FAIL x margin=-0.5 d=1");
}

}  // namespace
}  // namespace petbench
