#include "petbench/policyopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "petbench/error.hpp"
#include "petbench/rng.hpp"

namespace petbench {

std::string_view to_string(OptMethod m) {
  switch (m) {
    case OptMethod::GreedyExact: return "greedy_exact";
    case OptMethod::KlClosedForm: return "kl_closed_form";
    case OptMethod::PolicyGradient: return "policy_gradient";
  }
  return "greedy_exact";
}

OptMethod parse_opt_method(std::string_view s) {
  if (s == "greedy_exact") return OptMethod::GreedyExact;
  if (s == "kl_closed_form") return OptMethod::KlClosedForm;
  if (s == "policy_gradient") return OptMethod::PolicyGradient;
  throw Error(ErrorKind::Config, fmt::format("unknown optimizer method '{}'", s));
}

void OptConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorKind::Config, "eta must be >= 0");
  if (method == OptMethod::KlClosedForm && !(eta > 0.0))
    throw Error(ErrorKind::Config, "kl_closed_form needs eta > 0");
  if (method == OptMethod::PolicyGradient) {
    if (!(clip_epsilon > 0.0)) throw Error(ErrorKind::Config, "clip_epsilon must be positive");
    if (pg_steps > 0 && (pg_batch == 0 || pg_epochs == 0))
      throw Error(ErrorKind::Config, "pg_batch and pg_epochs must be positive");
    if (!(pg_lr > 0.0)) throw Error(ErrorKind::Config, "pg_lr must be positive");
  }
}

TabularPolicy greedy_policy(const RewardTable& r) {
  std::vector<std::size_t> choice(r.n_prompts());
  for (std::size_t x = 0; x < r.n_prompts(); ++x) {
    const auto row = r.values().row(x);
    choice[x] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return TabularPolicy::point_mass(choice, r.n_responses());
}

TabularPolicy kl_optimal_policy(const RewardTable& r, const TabularPolicy& pi_ref, double eta) {
  if (!(eta > 0.0)) throw Error(ErrorKind::Parameter, fmt::format("eta must be positive, got {}", eta));
  check_same_shape(r, pi_ref, "kl_optimal_policy");
  Matrix out(r.n_prompts(), r.n_responses());
  for (std::size_t x = 0; x < r.n_prompts(); ++x) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < r.n_responses(); ++a)
      if (pi_ref.prob(x, a) > 0.0) top = std::max(top, r(x, a));
    for (std::size_t a = 0; a < r.n_responses(); ++a) {
      const double p = pi_ref.prob(x, a);
      out(x, a) = p > 0.0 ? p * std::exp((r(x, a) - top) / eta) : 0.0;
    }
  }
  return TabularPolicy::normalized(std::move(out));
}

double regularized_objective(const RewardTable& r, const TabularPolicy& pi,
                             const TabularPolicy& pi_ref, const Distribution& mu, double eta) {
  const double v = value(r, pi, mu);
  if (eta == 0.0) return v;
  const KlResult kl = kl_divergence_checked(pi, pi_ref, mu);
  if (!kl.support_ok) return -std::numeric_limits<double>::infinity();
  return v - eta * kl.value;
}

namespace {

void softmax_rows(const Matrix& logits, const std::vector<std::vector<std::size_t>>& support,
                  Matrix& probs) {
  for (std::size_t x = 0; x < logits.rows(); ++x) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t a : support[x]) top = std::max(top, logits(x, a));
    double sum = 0.0;
    auto row = probs.row(x);
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t a : support[x]) {
      row[a] = std::exp(logits(x, a) - top);
      sum += row[a];
    }
    for (std::size_t a : support[x]) row[a] /= sum;
  }
}

struct Sample {
  std::size_t x;
  std::size_t a;
  double advantage;
  double old_prob;
};

}  // namespace

TabularPolicy pg_optimize(const RewardTable& r, const TabularPolicy& pi_ref, const World& world,
                          const OptConfig& cfg) {
  cfg.validate();
  check_same_shape(r, pi_ref, "pg_optimize");
  if (cfg.pg_steps == 0) return pi_ref;

  const std::size_t nx = r.n_prompts();
  const std::size_t na = r.n_responses();
  const Distribution& mu = world.mu;
  std::vector<std::vector<std::size_t>> support(nx);
  Matrix logits(nx, na, 0.0);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t a = 0; a < na; ++a)
      if (pi_ref.prob(x, a) > 0.0) {
        support[x].push_back(a);
        logits(x, a) = std::log(pi_ref.prob(x, a));
      }

  Rng rng(cfg.seed);
  const CdfSampler draw_prompt(mu.probs());
  Matrix probs(nx, na), old_probs(nx, na), grad(nx, na);
  std::vector<Sample> batch(cfg.pg_batch);
  std::vector<double> baseline(nx);
  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;
  const double inv_batch = 1.0 / static_cast<double>(cfg.pg_batch);

  for (std::size_t step = 0; step < cfg.pg_steps; ++step) {
    softmax_rows(logits, support, old_probs);
    for (std::size_t x = 0; x < nx; ++x) {
      baseline[x] = 0.0;
      for (std::size_t a : support[x]) baseline[x] += old_probs(x, a) * r(x, a);
    }
    for (auto& s : batch) {
      s.x = draw_prompt(rng);
      s.a = rng.categorical(old_probs.row(s.x));
      s.advantage = r(s.x, s.a) - baseline[s.x];
      s.old_prob = old_probs(s.x, s.a);
    }

    const double lr = cfg.pg_lr * (1.0 - static_cast<double>(step) / static_cast<double>(cfg.pg_steps));
    for (std::size_t epoch = 0; epoch < cfg.pg_epochs; ++epoch) {
      softmax_rows(logits, support, probs);
      std::fill(grad.data().begin(), grad.data().end(), 0.0);
      for (const auto& s : batch) {
        const double ratio = probs(s.x, s.a) / s.old_prob;
        // The clipped branch is active (zero gradient) once the ratio leaves
        // the trust interval in the direction the advantage favours.
        if ((s.advantage > 0.0 && ratio > hi) || (s.advantage < 0.0 && ratio < lo)) continue;
        const double w = s.advantage * ratio * inv_batch;
        for (std::size_t b : support[s.x]) grad(s.x, b) -= w * probs(s.x, b);
        grad(s.x, s.a) += w;
      }
      if (cfg.eta > 0.0) {
        for (std::size_t x = 0; x < nx; ++x) {
          double kl = 0.0;
          for (std::size_t a : support[x]) kl += probs(x, a) * std::log(probs(x, a) / pi_ref.prob(x, a));
          for (std::size_t a : support[x])
            grad(x, a) -= cfg.eta * mu[x] * probs(x, a) *
                          (std::log(probs(x, a) / pi_ref.prob(x, a)) - kl);
        }
      }
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t a : support[x]) logits(x, a) += lr * grad(x, a);
    }
    if (!std::isfinite(max_abs(logits)))
      throw Error(ErrorKind::Divergence, fmt::format("pg_optimize: non-finite logits at step {}", step));
  }
  softmax_rows(logits, support, probs);
  // exp underflow can zero a support cell; keep the policy valid regardless.
  return TabularPolicy::normalized(std::move(probs));
}

TabularPolicy optimize_policy(const RewardTable& r, const World& world, const OptConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case OptMethod::GreedyExact: return greedy_policy(r);
    case OptMethod::KlClosedForm: return kl_optimal_policy(r, world.pi_ref, cfg.eta);
    case OptMethod::PolicyGradient: return pg_optimize(r, world.pi_ref, world, cfg);
  }
  throw Error(ErrorKind::Config, "unreachable optimizer method");
}

EvalRow evaluate_policy(const TabularPolicy& pi, const World& world, const RewardTable& proxy,
                        const RewardTable& pet) {
  EvalRow row;
  row.v_true = value(world.true_reward, pi, world.mu);
  row.v_proxy = value(proxy, pi, world.mu);
  row.v_pet = value(pet, pi, world.mu);
  const KlResult kl = kl_divergence_checked(pi, world.pi_ref, world.mu);
  row.kl_to_ref = kl.value;
  row.kl_support_ok = kl.support_ok;
  return row;
}

double max_row_tv(const TabularPolicy& a, const TabularPolicy& b) {
  if (a.n_prompts() != b.n_prompts() || a.n_responses() != b.n_responses())
    throw Error(ErrorKind::Shape, "max_row_tv: shape mismatch");
  double worst = 0.0;
  for (std::size_t x = 0; x < a.n_prompts(); ++x) {
    double tv = 0.0;
    for (std::size_t k = 0; k < a.n_responses(); ++k) tv += std::abs(a.prob(x, k) - b.prob(x, k));
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

}  // namespace petbench
