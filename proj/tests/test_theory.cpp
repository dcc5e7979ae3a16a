#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "petbench/error.hpp"
#include "petbench/rs.hpp"
#include "petbench/theory.hpp"
#include "test_util.hpp"

namespace petbench {
namespace {

using testing::rows;

World small_world(std::size_t nx, std::size_t na, CoverageProfile p, std::uint64_t seed) {
  WorldConfig wc;
  wc.n_prompts = nx;
  wc.n_responses = na;
  wc.reward_bound = 1.0;
  wc.coverage_profile = p;
  wc.n_uncovered = p == CoverageProfile::Hackable ? 1 : 0;
  wc.seed = seed;
  return make_world(wc);
}

// sup_d c.d / sqrt(d' Q d) = sqrt(c' Q^+ c) when c lies in the range of Q.
double pinv_oracle(const TabularPolicy& pi, const World& w) {
  const std::size_t nx = w.prompts.size, na = w.responses.size, dim = nx * na;
  Eigen::VectorXd c(dim);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t a = 0; a < na; ++a) {
      c(x * na + a) = w.mu[x] * (pi.prob(x, a) - w.pi_ref.prob(x, a));
      for (std::size_t b = 0; b < na; ++b) {
        const double p = w.pair_dist(x, a, b);
        const std::size_t i = x * na + a, j = x * na + b;
        q(i, i) += p;
        q(j, j) += p;
        q(i, j) -= p;
        q(j, i) -= p;
      }
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  double s = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double lam = es.eigenvalues()(k);
    const double proj = es.eigenvectors().col(k).dot(c);
    if (lam > 1e-12) s += proj * proj / lam;
  }
  return std::sqrt(s);
}

TEST(CoveringLog, Examples) {
  EXPECT_EQ(covering_log(4, 1.0, 5.0), 0.0);
  EXPECT_NEAR(covering_log(16, 2.0, 0.01), 16.0 * std::log(400.0), 1e-12);
  EXPECT_NEAR(covering_log(16, 2.0, 0.01), 95.8637, 1e-3);
  EXPECT_THROW(covering_log(4, 1.0, 0.0), Error);
}

TEST(TheoremBeta, Example) {
  // sqrt(100) (1 + e)^2 / (2 sqrt(6) sqrt(5 + 1))
  const double e = std::exp(1.0);
  const double expected = 10.0 * (1 + e) * (1 + e) / (2.0 * std::sqrt(6.0) * std::sqrt(6.0));
  EXPECT_NEAR(theorem_beta(100, 1.0, 5.0, std::exp(-1.0)), expected, 1e-12);
  EXPECT_NEAR(theorem_beta(100, 1.0, 5.0, std::exp(-1.0)), 11.5213, 1e-4);
}

TEST(TheoremBeta, ScalesWithSqrtN) {
  const double b1 = theorem_beta(1000, 2.0, 10.0, 0.1);
  EXPECT_NEAR(theorem_beta(4000, 2.0, 10.0, 0.1) / b1, 2.0, 1e-12);
}

TEST(TheoremBeta, RejectsBadInputs) {
  EXPECT_THROW(theorem_beta(0, 1.0, 1.0, 0.1), Error);
  EXPECT_THROW(theorem_beta(10, 1.0, 1.0, 1.0), Error);
  EXPECT_THROW(theorem_beta(10, 0.0, 1.0, 0.1), Error);
}

TEST(TheoremBound, ZeroCoverage) {
  const double e = std::exp(1.0);
  const double l = 3.0 + std::log(10.0);
  EXPECT_NEAR(theorem_bound(0.0, 100, 1.0, 3.0, 0.1), (1 + e) * (1 + e) * std::sqrt(6.0 * l) / 40.0,
              1e-12);
}

TEST(TheoremBound, QuadrupleNHalves) {
  const double b = theorem_bound(1.3, 500, 2.0, 7.0, 0.05);
  EXPECT_NEAR(theorem_bound(1.3, 2000, 2.0, 7.0, 0.05), b / 2.0, 1e-12);
}

TEST(TheoremBound, InfiniteCoverage) {
  EXPECT_TRUE(std::isinf(theorem_bound(INFINITY, 100, 1.0, 1.0, 0.1)));
  EXPECT_THROW(theorem_bound(-1.0, 100, 1.0, 1.0, 0.1), Error);
}

TEST(TheoremBound, PreSubstitutionFormAgreesAtBetaStar) {
  const double beta = theorem_beta(3000, 1.5, 12.0, 0.1);
  for (double c : {0.0, 0.5, 1.0, 2.0})
    EXPECT_NEAR(theorem_bound_at_beta(c, 3000, 1.5, 12.0, 0.1, beta),
                theorem_bound(c, 3000, 1.5, 12.0, 0.1), 1e-12 * (1 + c * c));
}

TEST(TheoremBound, BetaStarMinimizesAtUnitCoverage) {
  const double beta = theorem_beta(800, 1.0, 4.0, 0.2);
  const double best = theorem_bound_at_beta(1.0, 800, 1.0, 4.0, 0.2, beta);
  for (double f : {0.5, 0.9, 1.1, 2.0})
    EXPECT_GT(theorem_bound_at_beta(1.0, 800, 1.0, 4.0, 0.2, f * beta), best);
}

TEST(Coverage, TruthAloneGivesZero) {
  const World w = small_world(2, 3, CoverageProfile::Full, 1);
  const auto pi = rs_policy(w.pi0, w.true_reward, 8);
  const auto est = coverage_over_class(pi, w, {w.true_reward});
  EXPECT_EQ(est.value, 0.0);
  EXPECT_FALSE(est.unbounded);
}

TEST(Coverage, RatioIsScaleFree) {
  const World w = small_world(2, 3, CoverageProfile::Full, 2);
  Rng rng(4);
  const auto pi = testing::random_policy(2, 3, rng);
  Matrix d(2, 3);
  for (double& v : d.data()) v = rng.uniform(-0.2, 0.2);
  const auto r1 = RewardTable(w.true_reward.values() - d, 2.0);
  const auto r2 = RewardTable(w.true_reward.values() - 3.0 * d, 2.0);
  EXPECT_NEAR(coverage_ratio(r1, pi, w), coverage_ratio(r2, pi, w), 1e-12);
}

TEST(Coverage, UncoveredMassIsUnbounded) {
  const World w = small_world(2, 4, CoverageProfile::Hackable, 3);
  std::vector<std::size_t> choice;
  for (std::size_t x = 0; x < 2; ++x) choice.push_back(w.uncovered[x].front());
  const auto pi = TabularPolicy::point_mass(choice, 4);
  const auto est = coverage_coefficient(pi, w, {8, 400, 1});
  EXPECT_TRUE(est.unbounded);
  EXPECT_TRUE(std::isinf(est.value));
}

TEST(Coverage, TwoResponseClosedForm) {
  World w = small_world(1, 2, CoverageProfile::Full, 5);
  const TabularPolicy pi(rows({{0.9, 0.1}}));
  const double p = w.pair_dist(0, 0, 1) + w.pair_dist(0, 1, 0);
  const double expected = std::abs(0.9 - w.pi_ref.prob(0, 0)) / std::sqrt(p);
  const auto est = coverage_coefficient(pi, w, {8, 400, 2});
  EXPECT_FALSE(est.unbounded);
  EXPECT_NEAR(est.value, expected, 0.05 * expected);
}

TEST(Coverage, MatchesPseudoInverseOracle) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const World w = small_world(2, 3, CoverageProfile::Full, seed);
    Rng rng(seed);
    const auto pi = testing::random_policy(2, 3, rng);
    const double oracle = pinv_oracle(pi, w);
    const auto est = coverage_coefficient(pi, w, {16, 400, seed});
    EXPECT_LE(est.value, oracle * (1 + 1e-9)) << seed;
    EXPECT_GE(est.value, 0.98 * oracle) << seed;
  }
}

TEST(Coverage, MoreStartsNeverWorse) {
  const World w = small_world(3, 4, CoverageProfile::Full, 21);
  Rng rng(21);
  const auto pi = testing::random_policy(3, 4, rng);
  const auto few = coverage_coefficient(pi, w, {2, 100, 7});
  const auto many = coverage_coefficient(pi, w, {8, 100, 7});
  EXPECT_GE(many.value, few.value);
  ASSERT_EQ(many.start_values.size(), 8u);
  EXPECT_EQ(few.start_values[0], many.start_values[0]);
}

TEST(Coverage, Deterministic) {
  const World w = small_world(2, 3, CoverageProfile::Full, 31);
  const auto pi = rs_policy(w.pi0, w.true_reward, 4);
  EXPECT_EQ(coverage_coefficient(pi, w, {4, 100, 3}).value, coverage_coefficient(pi, w, {4, 100, 3}).value);
}

TEST(EmpiricalGap, ZeroForSameRewardAndSignFlip) {
  const World w = small_world(2, 3, CoverageProfile::Full, 41);
  Rng rng(41);
  const auto r = testing::random_reward(2, 3, 1.0, rng);
  EXPECT_EQ(empirical_gap(w, r, r, 8), 0.0);
  EXPECT_NEAR(empirical_gap(w, r, w.true_reward, 8), -empirical_gap(w, w.true_reward, r, 8), 1e-15);
  // Best-of-n on the truth is optimal for the truth.
  EXPECT_LE(empirical_gap(w, w.true_reward, r, 8), 1e-12);
}

TEST(BoundReport, Fields) {
  const World w = small_world(2, 3, CoverageProfile::Full, 51);
  const auto pi = rs_policy(w.pi0, w.true_reward, 16);
  const auto cov = coverage_coefficient(pi, w, {4, 200, 1});
  const auto rep = bound_report(w, w.true_reward, w.true_reward, 1000, 0.1, 16, cov);
  EXPECT_EQ(rep.epsilon, 1e-3);
  EXPECT_NEAR(rep.covering_log, 6.0 * std::log(2000.0), 1e-12);
  EXPECT_EQ(rep.gap_empirical, 0.0);
  EXPECT_TRUE(rep.holds);
  EXPECT_NEAR(rep.rhs, theorem_bound(cov.value, 1000, 1.0, rep.covering_log, 0.1), 1e-15);
}

TEST(TheoremPetConfig, Settings) {
  const auto c = theorem_pet_config(2000, 1.0, 10.0, 0.1, 16);
  EXPECT_NEAR(c.beta, theorem_beta(2000, 1.0, 10.0, 0.1) * 2000.0, 1e-9);
  EXPECT_NEAR(c.learning_rate * c.beta, 2.0, 1e-12);
  EXPECT_EQ(c.mode, PetMode::Exact);
  EXPECT_EQ(c.n, 16u);
}

}  // namespace
}  // namespace petbench
