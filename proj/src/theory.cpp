#include "petbench/theory.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <thread>

#include <fmt/format.h>

#include "petbench/error.hpp"
#include "petbench/rng.hpp"
#include "petbench/rs.hpp"

namespace petbench {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RatioParts {
  double num = 0.0;
  double den = 0.0;
};

// Linear coefficient of num: c(x,a) = mu(x) (pi(a|x) - pi_ref(a|x)).
Matrix numerator_weights(const TabularPolicy& pi, const World& world) {
  Matrix c(pi.n_prompts(), pi.n_responses());
  for (std::size_t x = 0; x < pi.n_prompts(); ++x)
    for (std::size_t a = 0; a < pi.n_responses(); ++a)
      c(x, a) = world.mu[x] * (pi.prob(x, a) - world.pi_ref.prob(x, a));
  return c;
}

RatioParts ratio_parts(const Matrix& d, const Matrix& c, const PairDistribution& pd) {
  RatioParts p;
  p.num = dot(c, d);
  const std::size_t na = pd.n_responses();
  for (std::size_t x = 0; x < pd.n_prompts(); ++x)
    for (std::size_t a1 = 0; a1 < na; ++a1)
      for (std::size_t a2 = 0; a2 < na; ++a2) {
        const double w = pd(x, a1, a2);
        if (w == 0.0) continue;
        const double diff = d(x, a1) - d(x, a2);
        p.den += w * diff * diff;
      }
  return p;
}

double ratio_value(const RatioParts& p) {
  if (p.den > 0.0) return p.num / std::sqrt(p.den);
  return p.num > 0.0 ? kInf : 0.0;
}

// Gradient of num / sqrt(den) with respect to d.
Matrix ratio_grad_d(const Matrix& d, const Matrix& c, const PairDistribution& pd,
                    const RatioParts& p) {
  const std::size_t na = pd.n_responses();
  Matrix dden(d.rows(), d.cols());
  for (std::size_t x = 0; x < pd.n_prompts(); ++x)
    for (std::size_t a1 = 0; a1 < na; ++a1)
      for (std::size_t a2 = 0; a2 < na; ++a2) {
        const double w = pd(x, a1, a2);
        if (w == 0.0) continue;
        const double diff = 2.0 * w * (d(x, a1) - d(x, a2));
        dden(x, a1) += diff;
        dden(x, a2) -= diff;
      }
  const double s = std::sqrt(p.den);
  Matrix g = (1.0 / s) * c;
  g -= (p.num / (2.0 * p.den * s)) * dden;
  return g;
}

double frobenius(const Matrix& m) { return std::sqrt(dot(m, m)); }

struct StartResult {
  double best = -kInf;
  Matrix best_r;
  std::size_t evaluations = 0;
};

// Projected ascent in r with a backtracking step: grow after an accepted step,
// halve after a rejected one.
StartResult ascend(const Matrix& start, const Matrix& truth, const Matrix& c,
                   const PairDistribution& pd, double bound, std::size_t max_iters) {
  StartResult out;
  Matrix r = start;
  auto eval = [&](const Matrix& rr) {
    ++out.evaluations;
    return ratio_parts(truth - rr, c, pd);
  };
  RatioParts parts = eval(r);
  double current = ratio_value(parts);
  out.best = current;
  out.best_r = r;
  double step = 0.1 * bound;
  for (std::size_t it = 0; it < max_iters && std::isfinite(current); ++it) {
    if (!(parts.den > 0.0)) break;
    // d = truth - r, so the ascent direction in r is the negated d-gradient.
    Matrix g = -1.0 * ratio_grad_d(truth - r, c, pd, parts);
    const double gn = frobenius(g);
    if (!(gn > 0.0)) break;
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      Matrix cand = r + (step / gn) * g;
      for (double& v : cand.data()) v = std::clamp(v, -bound, bound);
      const RatioParts cp = eval(cand);
      const double cv = ratio_value(cp);
      if (cv > current) {
        r = std::move(cand);
        parts = cp;
        current = cv;
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (current > out.best) {
      out.best = current;
      out.best_r = r;
    }
    if (!accepted || current > kCoverageUnboundedThreshold) break;
  }
  return out;
}

}  // namespace

double coverage_ratio(const RewardTable& r, const TabularPolicy& pi, const World& world) {
  check_same_shape(r, pi, "coverage_ratio");
  const Matrix c = numerator_weights(pi, world);
  return ratio_value(ratio_parts(world.true_reward.values() - r.values(), c, world.pair_dist));
}

CoverageEstimate coverage_coefficient(const TabularPolicy& pi, const World& world,
                                      const CoverageOptions& opts) {
  check_same_shape(world.true_reward, pi, "coverage_coefficient");
  if (opts.n_starts == 0) throw Error(ErrorKind::Parameter, "coverage_coefficient needs n_starts >= 1");
  const double bound = world.true_reward.bound();
  const Matrix c = numerator_weights(pi, world);
  const Matrix& truth = world.true_reward.values();

  auto run_start = [&](std::size_t k) {
    Rng rng(derive_seed(opts.seed, fmt::format("coverage/start/{}", k)));
    Matrix start(truth.rows(), truth.cols());
    for (double& v : start.data()) v = rng.uniform(-bound, bound);
    return ascend(start, truth, c, world.pair_dist, bound, opts.max_iters);
  };

  // Starts are independent; results are combined in start order.
  std::vector<StartResult> results(opts.n_starts);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), opts.n_starts));
  if (workers == 1) {
    for (std::size_t k = 0; k < opts.n_starts; ++k) results[k] = run_start(k);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t k = w; k < opts.n_starts; k += workers) results[k] = run_start(k);
      }));
    for (auto& j : jobs) j.get();
  }

  CoverageEstimate est{0.0, false, world.true_reward, {}, 0};
  double best = -kInf;
  for (auto& res : results) {
    est.start_values.push_back(res.best);
    est.evaluations += res.evaluations;
    if (res.best > best) {
      best = res.best;
      est.argmax_reward = RewardTable::projected(res.best_r, bound);
    }
  }
  est.unbounded = best > kCoverageUnboundedThreshold;
  est.value = est.unbounded ? kInf : std::max(0.0, best);
  return est;
}

CoverageEstimate coverage_over_class(const TabularPolicy& pi, const World& world,
                                     const std::vector<RewardTable>& reward_class) {
  if (reward_class.empty()) throw Error(ErrorKind::Parameter, "coverage_over_class: empty class");
  CoverageEstimate est{0.0, false, reward_class.front(), {}, 0};
  double best = -kInf;
  for (const auto& r : reward_class) {
    const double v = coverage_ratio(r, pi, world);
    est.start_values.push_back(v);
    ++est.evaluations;
    if (v > best) {
      best = v;
      est.argmax_reward = r;
    }
  }
  est.unbounded = best > kCoverageUnboundedThreshold;
  est.value = est.unbounded ? kInf : std::max(0.0, best);
  return est;
}

double covering_log(std::size_t dim, double bound, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::Parameter, "covering_log needs epsilon > 0");
  if (!(bound > 0.0)) throw Error(ErrorKind::Parameter, "covering_log needs R > 0");
  return static_cast<double>(dim) * std::log(std::max(1.0, 2.0 * bound / epsilon));
}

namespace {

double log_cover_over_delta(double log_covering, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::Parameter, "delta must lie in (0, 1)");
  if (!(log_covering >= 0.0)) throw Error(ErrorKind::Parameter, "covering log must be >= 0");
  return log_covering + std::log(1.0 / delta);
}

double squared_link(double bound) {
  const double s = 1.0 + std::exp(bound);
  return s * s;
}

}  // namespace

double theorem_beta(std::size_t n_data, double bound, double log_covering, double delta) {
  if (n_data == 0) throw Error(ErrorKind::Parameter, "theorem_beta needs N >= 1");
  if (!(bound > 0.0)) throw Error(ErrorKind::Parameter, "theorem_beta needs R > 0");
  const double l = log_cover_over_delta(log_covering, delta);
  return std::sqrt(static_cast<double>(n_data)) * squared_link(bound) /
         (2.0 * std::sqrt(6.0) * std::sqrt(l));
}

double theorem_bound(double coverage, std::size_t n_data, double bound, double log_covering,
                     double delta) {
  if (n_data == 0) throw Error(ErrorKind::Parameter, "theorem_bound needs N >= 1");
  if (!(coverage >= 0.0)) throw Error(ErrorKind::Parameter, "coverage must be >= 0");
  if (!std::isfinite(coverage)) return kInf;
  const double l = log_cover_over_delta(log_covering, delta);
  return squared_link(bound) * (coverage * coverage + 1.0) * std::sqrt(6.0 * l) /
         (4.0 * std::sqrt(static_cast<double>(n_data)));
}

double theorem_bound_at_beta(double coverage, std::size_t n_data, double bound,
                             double log_covering, double delta, double beta) {
  if (!(beta > 0.0)) throw Error(ErrorKind::Parameter, "beta must be positive");
  if (!std::isfinite(coverage)) return kInf;
  const double l = log_cover_over_delta(log_covering, delta);
  const double kappa = 1.0 / squared_link(bound);
  return coverage * coverage / (8.0 * kappa * kappa * beta) +
         3.0 * beta * l / static_cast<double>(n_data);
}

double empirical_gap(const World& world, const RewardTable& r_hat, const RewardTable& challenger,
                     std::size_t n) {
  const auto& truth = world.true_reward;
  return value(truth, rs_policy(world.pi0, challenger, n), world.mu) -
         value(truth, rs_policy(world.pi0, r_hat, n), world.mu);
}

double default_epsilon(std::size_t n_data) {
  if (n_data == 0) throw Error(ErrorKind::Parameter, "default_epsilon needs N >= 1");
  return 1.0 / static_cast<double>(n_data);
}

BoundReport bound_report(const World& world, const RewardTable& r_hat,
                         const RewardTable& challenger, std::size_t n_data, double delta,
                         std::size_t n, const CoverageEstimate& coverage) {
  BoundReport rep;
  rep.n_data = n_data;
  rep.delta = delta;
  rep.bound = world.true_reward.bound();
  rep.epsilon = default_epsilon(n_data);
  const std::size_t dim = world.true_reward.n_prompts() * world.true_reward.n_responses();
  rep.covering_log = covering_log(dim, rep.bound, rep.epsilon);
  rep.beta_star = theorem_beta(n_data, rep.bound, rep.covering_log, delta);
  rep.coverage = coverage.value;
  rep.coverage_unbounded = coverage.unbounded;
  rep.rhs = theorem_bound(coverage.value, n_data, rep.bound, rep.covering_log, delta);
  rep.gap_empirical = empirical_gap(world, r_hat, challenger, n);
  rep.holds = rep.gap_empirical <= rep.rhs;
  return rep;
}

PetConfig theorem_pet_config(std::size_t n_data, double bound, double log_covering, double delta,
                             std::size_t n) {
  PetConfig cfg;
  cfg.beta = theorem_beta(n_data, bound, log_covering, delta) * static_cast<double>(n_data);
  cfg.n = n;
  cfg.mode = PetMode::Exact;
  // The prediction term has Hessian eigenvalues of at most beta / 2.
  cfg.learning_rate = 2.0 / cfg.beta;
  cfg.iterations = 5000;
  cfg.tolerance = 1e-10;
  return cfg;
}

}  // namespace petbench
