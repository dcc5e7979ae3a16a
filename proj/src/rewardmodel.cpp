#include "petbench/rewardmodel.hpp"

#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "petbench/error.hpp"
#include "petbench/rng.hpp"

namespace petbench {

std::string_view to_string(RewardInit init) {
  switch (init) {
    case RewardInit::Zero: return "zero";
    case RewardInit::UniformRandom: return "uniform_random";
    case RewardInit::Optimistic: return "optimistic";
  }
  return "zero";
}

RewardInit parse_reward_init(std::string_view s) {
  if (s == "zero") return RewardInit::Zero;
  if (s == "uniform_random") return RewardInit::UniformRandom;
  if (s == "optimistic") return RewardInit::Optimistic;
  throw Error(ErrorKind::Config, fmt::format("unknown reward init '{}'", s));
}

RewardTable initial_reward(std::size_t n_prompts, std::size_t n_responses, double bound,
                           RewardInit init, std::uint64_t seed) {
  switch (init) {
    case RewardInit::Zero:
      return RewardTable::filled(n_prompts, n_responses, 0.0, bound);
    case RewardInit::Optimistic:
      return RewardTable::filled(n_prompts, n_responses, bound, bound);
    case RewardInit::UniformRandom: {
      Rng rng(seed);
      Matrix m(n_prompts, n_responses);
      for (double& v : m.data()) v = rng.uniform(-bound, bound);
      return RewardTable(std::move(m), bound);
    }
  }
  throw Error(ErrorKind::Config, "unreachable reward init");
}

LossReport proxy_loss_report(const RewardTable& r, const PreferenceDataset& data) {
  const double loss = prediction_loss(r, data);
  double hits = 0.0;
  for (const auto& t : data.tuples()) {
    const double d = r(t.x, t.a1) - r(t.x, t.a2);
    if (d == 0.0) hits += 0.5;
    else if ((d > 0.0) == (t.sigma == 1)) hits += 1.0;
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, hits / n};
}

TrainResult train_proxy(const PreferenceDataset& data, double bound, const TrainConfig& cfg) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "train_proxy: empty dataset");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning_rate must be positive");
  if (cfg.batch_size == 0 || cfg.batch_size > data.size())
    throw Error(ErrorKind::Config, fmt::format("batch_size must be in [1, N={}], got {}", data.size(),
                                               cfg.batch_size));

  Rng rng(cfg.seed);
  RewardTable r = initial_reward(data.n_prompts(), data.n_responses(), bound, cfg.init,
                                 derive_seed(cfg.seed, "init"));

  TrainResult out{r, {}};
  auto record = [&](std::size_t epoch) {
    const LossReport rep = proxy_loss_report(r, data);
    out.curve.push_back({epoch, rep.loss_per_tuple, rep.accuracy});
  };
  record(0);

  const std::size_t steps = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double scale = cfg.learning_rate / static_cast<double>(cfg.batch_size);
  Matrix grad(data.n_prompts(), data.n_responses());
  const bool full_batch = cfg.batch_size == data.size();
  const std::optional<WinCounts> counts = full_batch ? std::optional<WinCounts>(data) : std::nullopt;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps && !full_batch; ++s) {
      std::fill(grad.data().begin(), grad.data().end(), 0.0);
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto& t = data[rng.index(data.size())];
        const double d = r(t.x, t.a1) - r(t.x, t.a2);
        const double g = t.sigma == 1 ? sigmoid(d) - 1.0 : sigmoid(d);
        grad(t.x, t.a1) += g;
        grad(t.x, t.a2) -= g;
      }
      r = r.stepped(grad, scale);
    }
    if (full_batch) r = r.stepped(counts->loss_and_grad(r).grad, scale);
    record(epoch);
    if (!std::isfinite(out.curve.back().loss))
      throw Error(ErrorKind::Divergence, fmt::format("train_proxy: non-finite loss at epoch {}", epoch));
  }
  out.reward = std::move(r);
  return out;
}

}  // namespace petbench
