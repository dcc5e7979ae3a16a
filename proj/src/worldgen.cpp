#include "petbench/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "petbench/error.hpp"
#include "petbench/rng.hpp"

namespace petbench {

std::string_view to_string(CoverageProfile p) {
  return p == CoverageProfile::Full ? "full" : "hackable";
}

CoverageProfile parse_coverage_profile(std::string_view s) {
  if (s == "full") return CoverageProfile::Full;
  if (s == "hackable") return CoverageProfile::Hackable;
  throw Error(ErrorKind::Config, fmt::format("unknown coverage profile '{}'", s));
}

void WorldConfig::validate() const {
  if (n_prompts == 0) throw Error(ErrorKind::Config, "n_prompts must be at least 1");
  if (n_responses == 0) throw Error(ErrorKind::Config, "n_responses must be at least 1");
  if (!(reward_bound > 0.0) || !std::isfinite(reward_bound))
    throw Error(ErrorKind::Config, "reward_bound must be positive and finite");
  if (coverage_profile == CoverageProfile::Hackable && n_uncovered >= n_responses)
    throw Error(ErrorKind::Config, fmt::format("n_uncovered ({}) must be below n_responses ({})",
                                               n_uncovered, n_responses));
  if (!(base_temperature > 0.0) || !(ref_temperature > 0.0))
    throw Error(ErrorKind::Config, "temperatures must be positive");
}

bool World::is_uncovered(std::size_t x, std::size_t a) const {
  const auto& u = uncovered.at(x);
  return std::find(u.begin(), u.end(), a) != u.end();
}

std::vector<double> masked_softmax(std::span<const double> scores, double temperature,
                                   const std::vector<bool>& mask) {
  double top = -INFINITY;
  for (std::size_t a = 0; a < scores.size(); ++a)
    if (mask[a]) top = std::max(top, scores[a]);
  std::vector<double> p(scores.size(), 0.0);
  double sum = 0.0;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (!mask[a]) continue;
    p[a] = std::exp((scores[a] - top) / temperature);
    sum += p[a];
  }
  for (double& v : p) v /= sum;
  return p;
}

World make_world(const WorldConfig& cfg) {
  cfg.validate();
  const std::size_t nx = cfg.n_prompts;
  const std::size_t na = cfg.n_responses;
  const double bound = cfg.reward_bound;
  Rng rng(cfg.seed);

  Matrix truth(nx, na);
  for (double& v : truth.data()) v = rng.uniform(-bound, bound);

  std::vector<std::vector<std::size_t>> uncovered(nx);
  if (cfg.coverage_profile == CoverageProfile::Hackable && cfg.n_uncovered > 0) {
    for (std::size_t x = 0; x < nx; ++x) {
      std::vector<std::size_t> order(na);
      std::iota(order.begin(), order.end(), 0);
      // Partial Fisher-Yates picks the designated responses.
      for (std::size_t i = 0; i < cfg.n_uncovered; ++i) {
        const std::size_t j = i + rng.index(na - i);
        std::swap(order[i], order[j]);
      }
      std::vector<std::size_t> designated(order.begin(), order.begin() + cfg.n_uncovered);
      std::sort(designated.begin(), designated.end());

      // Designated responses take the lowest values of the row; covered
      // responses keep the rank order of their original draws.
      auto row = truth.row(x);
      std::vector<double> sorted(row.begin(), row.end());
      std::sort(sorted.begin(), sorted.end());
      std::vector<std::size_t> covered;
      for (std::size_t a = 0; a < na; ++a)
        if (!std::binary_search(designated.begin(), designated.end(), a)) covered.push_back(a);
      std::stable_sort(covered.begin(), covered.end(),
                       [&](std::size_t i, std::size_t j) { return row[i] < row[j]; });
      std::vector<double> next(na);
      for (std::size_t i = 0; i < designated.size(); ++i) next[designated[i]] = sorted[i];
      for (std::size_t i = 0; i < covered.size(); ++i) next[covered[i]] = sorted[designated.size() + i];
      std::copy(next.begin(), next.end(), row.begin());
      uncovered[x] = std::move(designated);
    }
  }

  const Distribution mu = Distribution::uniform(nx);

  std::vector<double> pair(nx * na * na, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    std::vector<std::size_t> support;
    for (std::size_t a = 0; a < na; ++a)
      if (std::find(uncovered[x].begin(), uncovered[x].end(), a) == uncovered[x].end())
        support.push_back(a);
    auto at = [&](std::size_t a1, std::size_t a2) -> double& {
      return pair[(x * na + a1) * na + a2];
    };
    if (support.size() == 1) {
      at(support[0], support[0]) = mu[x];
      continue;
    }
    const double ordered_pairs = static_cast<double>(support.size() * (support.size() - 1));
    for (std::size_t a1 : support)
      for (std::size_t a2 : support)
        if (a1 != a2) at(a1, a2) = mu[x] / ordered_pairs;
  }

  Matrix ref(nx, na), base(nx, na);
  for (std::size_t x = 0; x < nx; ++x) {
    std::vector<bool> covered_mask(na, true), all(na, true);
    for (std::size_t a : uncovered[x]) covered_mask[a] = false;
    const auto pr = masked_softmax(truth.row(x), cfg.ref_temperature, covered_mask);
    const auto pb = masked_softmax(truth.row(x), cfg.base_temperature, all);
    std::copy(pr.begin(), pr.end(), ref.row(x).begin());
    std::copy(pb.begin(), pb.end(), base.row(x).begin());
  }

  return World{
      .prompts = {nx},
      .responses = {na},
      .true_reward = RewardTable(std::move(truth), bound),
      .mu = mu,
      .pair_dist = PairDistribution(nx, na, std::move(pair)),
      .pi_ref = TabularPolicy(std::move(ref)),
      .pi0 = TabularPolicy(std::move(base)),
      .seed = cfg.seed,
      .uncovered = std::move(uncovered),
      .config = cfg,
  };
}

PreferenceDataset sample_dataset(const World& w, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::EmptyData, "sample_dataset: N must be at least 1");
  const std::size_t na = w.responses.size;
  const CdfSampler draw_cell(w.pair_dist.probs());
  Rng rng(seed);
  std::vector<PreferenceTuple> tuples;
  tuples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cell = draw_cell(rng);
    const std::size_t x = cell / (na * na);
    const std::size_t a1 = (cell / na) % na;
    const std::size_t a2 = cell % na;
    const int sigma = rng.bernoulli(bt_prob(w.true_reward, x, a1, a2)) ? 1 : 0;
    tuples.push_back({x, a1, a2, sigma});
  }
  return PreferenceDataset(w.prompts, w.responses, std::move(tuples));
}

}  // namespace petbench
