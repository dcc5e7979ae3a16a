#include "petbench/pet.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "petbench/error.hpp"
#include "petbench/rs.hpp"

namespace petbench {

std::string_view to_string(PetMode m) { return m == PetMode::Exact ? "exact" : "sampled"; }

PetMode parse_pet_mode(std::string_view s) {
  if (s == "exact") return PetMode::Exact;
  if (s == "sampled") return PetMode::Sampled;
  throw Error(ErrorKind::Config, fmt::format("unknown PET mode '{}'", s));
}

void PetConfig::validate(std::size_t dataset_size) const {
  if (!(beta > 0.0)) throw Error(ErrorKind::Config, "PET beta must be positive");
  if (n == 0) throw Error(ErrorKind::Config, "PET n must be at least 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "PET learning_rate must be positive");
  if (mode == PetMode::Sampled && (batch_size == 0 || batch_size > dataset_size))
    throw Error(ErrorKind::Config,
                fmt::format("PET batch_size must be in [1, N={}], got {}", dataset_size, batch_size));
}

namespace {

// mu(x) * (pi_t - pi_ref), the policy-fixed gradient of the value gap.
LossGrad value_gap_term(const RewardTable& r, const TabularPolicy& pi_t,
                        const TabularPolicy& pi_ref, const Distribution& mu) {
  check_same_shape(r, pi_t, "pet_loss");
  check_same_shape(r, pi_ref, "pet_loss");
  if (mu.size() != r.n_prompts()) throw Error(ErrorKind::Shape, "pet_loss: prompt distribution size");
  LossGrad out{0.0, Matrix(r.n_prompts(), r.n_responses())};
  for (std::size_t x = 0; x < r.n_prompts(); ++x) {
    for (std::size_t a = 0; a < r.n_responses(); ++a) {
      const double w = mu[x] * (pi_t.prob(x, a) - pi_ref.prob(x, a));
      out.loss += w * r(x, a);
      out.grad(x, a) = w;
    }
  }
  return out;
}

LossGrad combine(LossGrad gap, const LossGrad& pred, double weight) {
  gap.loss += weight * pred.loss;
  gap.grad += weight * pred.grad;
  return gap;
}

}  // namespace

LossGrad pet_loss_exact(const RewardTable& r, const TabularPolicy& pi_t,
                        const TabularPolicy& pi_ref, const Distribution& mu,
                        const PreferenceDataset& batch, double beta) {
  const LossGrad pred = prediction_loss_and_grad(r, batch);
  return combine(value_gap_term(r, pi_t, pi_ref, mu), pred,
                 beta / static_cast<double>(batch.size()));
}

LossGrad pet_loss_exact(const RewardTable& r, const TabularPolicy& pi_t,
                        const TabularPolicy& pi_ref, const Distribution& mu,
                        const WinCounts& counts, double beta) {
  const LossGrad pred = counts.loss_and_grad(r);
  return combine(value_gap_term(r, pi_t, pi_ref, mu), pred,
                 beta / static_cast<double>(counts.total()));
}

std::vector<PetDraw> draw_pet_batch(const PreferenceDataset& data, const TabularPolicy& pi0,
                                    const RewardTable& r, std::size_t n,
                                    const TabularPolicy& pi_ref, std::size_t m, Rng& rng) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "draw_pet_batch: empty dataset");
  const RsSpec spec{pi0, r, n};
  spec.validate();
  std::vector<PetDraw> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const PreferenceTuple& t = data[rng.index(data.size())];
    const std::size_t a = rs_sample(spec, t.x, rng);
    const std::size_t a_ref = rng.categorical(pi_ref.row(t.x));
    out.push_back({t, a, a_ref});
  }
  return out;
}

LossGrad pet_loss_sampled(const RewardTable& r, std::span<const PetDraw> draws, double beta) {
  if (draws.empty()) throw Error(ErrorKind::EmptyData, "pet_loss_sampled: empty mini-batch");
  LossGrad out{0.0, Matrix(r.n_prompts(), r.n_responses())};
  for (const auto& d : draws) {
    const auto& t = d.tuple;
    out.loss += r(t.x, d.response) - r(t.x, d.ref_response);
    out.grad(t.x, d.response) += 1.0;
    out.grad(t.x, d.ref_response) -= 1.0;

    const double diff = r(t.x, t.a1) - r(t.x, t.a2);
    const double sign = t.sigma == 1 ? 1.0 : -1.0;
    out.loss -= beta * log_sigmoid(sign * diff);
    const double g = beta * (t.sigma == 1 ? sigmoid(diff) - 1.0 : sigmoid(diff));
    out.grad(t.x, t.a1) += g;
    out.grad(t.x, t.a2) -= g;
  }
  const double inv = 1.0 / static_cast<double>(draws.size());
  out.loss *= inv;
  out.grad *= inv;
  return out;
}

double relative_score(const RewardTable& r, const World& world, std::size_t n) {
  return value(r, rs_policy(world.pi0, r, n), world.mu) - value(r, world.pi_ref, world.mu);
}

PetResult pet_finetune(const World& world, const PreferenceDataset& data,
                       const RewardTable& r_init, const PetConfig& cfg) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "pet_finetune: empty dataset");
  cfg.validate(data.size());
  check_same_shape(r_init, world.pi0, "pet_finetune");
  check_same_shape(r_init, data, "pet_finetune");

  const WinCounts counts(data);
  const double per_tuple = 1.0 / static_cast<double>(data.size());
  Rng rng(cfg.seed);

  PetResult out{r_init, {}, 0};
  RewardTable r = r_init;
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const TabularPolicy pi_t = rs_policy(world.pi0, r, cfg.n);
    const LossGrad exact = pet_loss_exact(r, pi_t, world.pi_ref, world.mu, counts, cfg.beta);
    const double pred = counts.loss(r) * per_tuple;
    out.trace.push_back({t, exact.loss, pred, exact.loss - cfg.beta * pred});
    if (!std::isfinite(exact.loss) || !std::isfinite(max_abs(exact.grad)))
      throw Error(ErrorKind::Divergence,
                  fmt::format("pet_finetune: non-finite loss {} at iteration {} (pred_loss {}, "
                              "max |r| {})",
                              exact.loss, t, pred, max_abs(r.values())));

    Matrix grad = exact.grad;
    if (cfg.mode == PetMode::Sampled) {
      const auto draws = draw_pet_batch(data, world.pi0, r, cfg.n, world.pi_ref, cfg.batch_size, rng);
      grad = pet_loss_sampled(r, draws, cfg.beta).grad;
    }
    RewardTable next = r.stepped(grad, cfg.learning_rate);
    const double moved = max_abs(next.values() - r.values());
    r = std::move(next);
    out.iterations_run = t;
    if (cfg.tolerance > 0.0 && moved < cfg.tolerance) break;
  }
  out.reward = std::move(r);
  return out;
}

PessimismCertificate pessimism_certificate(const RewardTable& r_pet, const RewardTable& proxy,
                                           const World& world, const PreferenceDataset& data,
                                           std::size_t n) {
  PessimismCertificate c;
  c.score_pet = relative_score(r_pet, world, n);
  c.score_proxy = relative_score(proxy, world, n);
  const auto size = static_cast<double>(data.size());
  c.loss_pet = prediction_loss(r_pet, data) / size;
  c.loss_proxy = prediction_loss(proxy, data) / size;
  c.pet_more_pessimistic = c.score_pet <= c.score_proxy;
  return c;
}

}  // namespace petbench
