#include <gtest/gtest.h>

#include <cmath>

#include "petbench/error.hpp"
#include "petbench/rewardmodel.hpp"
#include "petbench/worldgen.hpp"
#include "test_util.hpp"

namespace petbench {
namespace {

World small_full_world(std::uint64_t seed) {
  WorldConfig c;
  c.n_prompts = 4;
  c.n_responses = 4;
  c.coverage_profile = CoverageProfile::Full;
  c.seed = seed;
  return make_world(c);
}

TEST(TrainProxy, RecoversRewardDifferences) {
  const World w = small_full_world(31);
  const auto data = sample_dataset(w, 50000, 32);
  TrainConfig cfg;
  cfg.seed = 33;
  const RewardTable r = train_proxy(data, w.config.reward_bound, cfg).reward;
  double worst = 0.0;
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t a = 1; a < 4; ++a) {
      const double learned = r(x, a) - r(x, 0);
      const double truth = w.true_reward(x, a) - w.true_reward(x, 0);
      worst = std::max(worst, std::abs(learned - truth));
    }
  EXPECT_LT(worst, 0.15);
}

TEST(TrainProxy, ZeroEpochsKeepsInit) {
  Rng rng(1);
  const auto data = testing::random_dataset(2, 3, 40, rng);
  TrainConfig cfg;
  cfg.init = RewardInit::Zero;
  cfg.epochs = 0;
  cfg.batch_size = 8;
  const auto res = train_proxy(data, 1.0, cfg);
  EXPECT_EQ(max_abs(res.reward.values()), 0.0);
  ASSERT_EQ(res.curve.size(), 1u);
  EXPECT_NEAR(res.curve[0].loss, std::log(2.0), 1e-15);
}

TEST(TrainProxy, OptimisticUncoveredCellsStayAtBound) {
  WorldConfig c;
  c.seed = 4;
  const World w = make_world(c);
  const auto data = sample_dataset(w, 5000, 5);
  TrainConfig cfg;
  cfg.epochs = 5;
  const RewardTable r = train_proxy(data, c.reward_bound, cfg).reward;
  for (std::size_t x = 0; x < w.prompts.size; ++x)
    for (std::size_t a : w.uncovered[x]) {
      EXPECT_EQ(r(x, a), c.reward_bound);
      EXPECT_GT(r(x, a), w.true_reward(x, a));
    }
}

TEST(TrainProxy, LossDecreasesAndStaysInBox) {
  WorldConfig c;
  c.seed = 6;
  const World w = make_world(c);
  const auto data = sample_dataset(w, 8000, 7);
  TrainConfig cfg;
  cfg.init = RewardInit::UniformRandom;
  cfg.seed = 8;
  const auto res = train_proxy(data, c.reward_bound, cfg);
  EXPECT_LE(res.curve.back().loss, res.curve.front().loss);
  EXPECT_LE(max_abs(res.reward.values()), c.reward_bound);
  EXPECT_EQ(res.curve.size(), cfg.epochs + 1);
}

TEST(TrainProxy, FullBatchMonotoneAtSmallStep) {
  WorldConfig c;
  c.seed = 9;
  const World w = make_world(c);
  const auto data = sample_dataset(w, 4000, 10);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = data.size();
  cfg.epochs = 50;
  cfg.init = RewardInit::UniformRandom;
  const auto res = train_proxy(data, c.reward_bound, cfg);
  for (std::size_t i = 1; i < res.curve.size(); ++i) EXPECT_LE(res.curve[i].loss, res.curve[i - 1].loss + 1e-15);
}

TEST(TrainProxy, Errors) {
  const PreferenceDataset empty(PromptSpace{1}, ResponseSpace{2}, {});
  try {
    train_proxy(empty, 1.0, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyData);
  }
  Rng rng(2);
  const auto data = testing::random_dataset(1, 2, 10, rng);
  TrainConfig big;
  big.batch_size = 11;
  EXPECT_THROW(train_proxy(data, 1.0, big), Error);
}

TEST(ProxyLossReport, AllZeroRewardIsLn2) {
  Rng rng(3);
  const auto data = testing::random_dataset(3, 4, 100, rng);
  const auto rep = proxy_loss_report(RewardTable::filled(3, 4, 0.0, 1.0), data);
  EXPECT_NEAR(rep.loss_per_tuple, std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(rep.accuracy, 0.5);
}

TEST(ProxyLossReport, NegationFlipsAccuracy) {
  Rng rng(4);
  std::vector<PreferenceTuple> t;
  for (int i = 0; i < 200; ++i) {
    const std::size_t a1 = rng.index(4);
    t.push_back({rng.index(2), a1, (a1 + 1 + rng.index(3)) % 4, rng.bernoulli(0.5) ? 1 : 0});
  }
  const PreferenceDataset data(PromptSpace{2}, ResponseSpace{4}, t);
  const auto r = testing::random_reward(2, 4, 1.0, rng);
  EXPECT_NEAR(proxy_loss_report(r.negated(), data).accuracy, 1.0 - proxy_loss_report(r, data).accuracy, 1e-15);
}

TEST(ProxyLossReport, TrueRewardReachesBayesRate) {
  const World w = small_full_world(40);
  constexpr std::size_t kN = 100000;
  const auto data = sample_dataset(w, kN, 41);
  // Bayes rate: E over mu_D of max(p, 1 - p) with p the true preference probability.
  double bayes = 0.0;
  const std::size_t na = w.responses.size;
  for (std::size_t x = 0; x < w.prompts.size; ++x)
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t b = 0; b < na; ++b) {
        const double m = w.pair_dist(x, a, b);
        if (m == 0.0) continue;
        const double p = 1.0 / (1.0 + std::exp(w.true_reward(x, b) - w.true_reward(x, a)));
        bayes += m * std::max(p, 1.0 - p);
      }
  const double se = std::sqrt(bayes * (1.0 - bayes) / kN);
  EXPECT_NEAR(proxy_loss_report(w.true_reward, data).accuracy, bayes, 3.0 * se);
}

TEST(RewardInit, Modes) {
  EXPECT_EQ(max_abs(initial_reward(2, 3, 1.5, RewardInit::Zero, 0).values()), 0.0);
  const auto opt = initial_reward(2, 3, 1.5, RewardInit::Optimistic, 0);
  for (double v : opt.values().data()) EXPECT_EQ(v, 1.5);
  const auto a = initial_reward(2, 3, 1.5, RewardInit::UniformRandom, 7);
  EXPECT_EQ(a, initial_reward(2, 3, 1.5, RewardInit::UniformRandom, 7));
  EXPECT_LE(max_abs(a.values()), 1.5);
  EXPECT_EQ(parse_reward_init("uniform_random"), RewardInit::UniformRandom);
  EXPECT_THROW(parse_reward_init("warm"), Error);
}

}  // namespace
}  // namespace petbench
