#include "petbench/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "petbench/rewardmodel.hpp"
#include "petbench/rng.hpp"
#include "petbench/rs.hpp"
#include "petbench/theory.hpp"
#include "petbench/worldgen.hpp"

namespace petbench {

namespace {

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// Half the time values snap to a coarse grid so that ties occur.
RewardTable random_reward(std::size_t nx, std::size_t na, double bound, Rng& rng, bool allow_ties) {
  const bool snap = allow_ties && rng.bernoulli(0.5);
  Matrix m(nx, na);
  for (double& v : m.data()) {
    v = rng.uniform(-bound, bound);
    if (snap) v = std::clamp(std::round(v * 2.0) / 2.0, -bound, bound);
  }
  return RewardTable(std::move(m), bound);
}

// Positive weights with the occasional zero; every row keeps some mass.
TabularPolicy random_policy(std::size_t nx, std::size_t na, Rng& rng, bool allow_zeros) {
  Matrix w(nx, na);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t a = 0; a < na; ++a)
      w(x, a) = allow_zeros && rng.bernoulli(0.2) ? 0.0 : rng.uniform(0.05, 1.0);
    w(x, rng.index(na)) += 0.1;
  }
  return TabularPolicy::normalized(std::move(w));
}

Distribution random_distribution(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  double s = 0.0;
  for (double& v : p) s += (v = rng.uniform(0.1, 1.0));
  for (double& v : p) v /= s;
  return Distribution(std::move(p));
}

PreferenceDataset random_dataset(std::size_t nx, std::size_t na, std::size_t size, Rng& rng) {
  std::vector<PreferenceTuple> t;
  for (std::size_t i = 0; i < size; ++i)
    t.push_back({rng.index(nx), rng.index(na), rng.index(na), rng.bernoulli(0.5) ? 1 : 0});
  return PreferenceDataset(PromptSpace{nx}, ResponseSpace{na}, std::move(t));
}

PropertyResult make_result(std::string name, double margin, std::string detail) {
  return {std::move(name), margin >= 0.0, margin, std::move(detail)};
}

}  // namespace

GradCheck check_gradient(const LossFn& f, const RewardTable& at, double h) {
  const Matrix g = f(at).grad;
  Matrix fd(at.n_prompts(), at.n_responses());
  Matrix vals = at.values();
  for (std::size_t i = 0; i < vals.data().size(); ++i) {
    const double orig = vals.data()[i];
    vals.data()[i] = orig + h;
    const double up = f(RewardTable(vals, at.bound() + h)).loss;
    vals.data()[i] = orig - h;
    const double down = f(RewardTable(vals, at.bound() + h)).loss;
    vals.data()[i] = orig;
    fd.data()[i] = (up - down) / (2.0 * h);
  }
  GradCheck out;
  out.max_abs_error = max_abs(fd - g);
  const double scale = std::max({max_abs(fd), max_abs(g), 1e-12});
  out.max_rel_error = out.max_abs_error / scale;
  return out;
}

PetLossExactFn default_pet_loss_exact() {
  return [](const RewardTable& r, const TabularPolicy& pi_t, const TabularPolicy& pi_ref,
            const Distribution& mu, const PreferenceDataset& batch, double beta) {
    return pet_loss_exact(r, pi_t, pi_ref, mu, batch, beta);
  };
}

PropertyResult verify_rs_optimality(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, "verify/rs_optimality"));
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < opts.rs_optimality_cases; ++c) {
    const std::size_t nx = between(rng, 1, 4);
    const std::size_t na = between(rng, 2, 6);
    const double bound = rng.uniform(0.5, 3.0);
    const std::size_t n = between(rng, 1, 8);
    const TabularPolicy base = random_policy(nx, na, rng, true);
    const Distribution mu = random_distribution(nx, rng);
    const RewardTable r0 = random_reward(nx, na, bound, rng, true);
    RewardTable challenger = random_reward(nx, na, bound, rng, true);
    if (c % 3 == 1) {
      // Small perturbation of r0: the hardest challengers sit next to it.
      Matrix m = r0.values();
      for (double& v : m.data()) v += rng.uniform(-0.05, 0.05);
      challenger = RewardTable::projected(std::move(m), bound);
    } else if (c % 3 == 2) {
      challenger = r0.negated();
    }
    const auto rep = verify_proposition1(base, r0, n, {challenger}, mu);
    worst = std::min(worst, rep.min_margin);
  }
  return make_result("rs_self_optimality", worst + kRsOptimalityTolerance,
                     fmt::format("cases={} min_value_margin={:.3e}", opts.rs_optimality_cases, worst));
}

PropertyResult verify_rs_monte_carlo(const VerifyOptions& opts) {
  constexpr double kTvTolerance = 0.005;
  Rng gen(derive_seed(opts.seed, "verify/rs-spec"));
  double worst = 0.0;
  for (std::size_t s = 0; s < opts.rs_specs; ++s) {
    const std::size_t nx = between(gen, 1, 2);
    const std::size_t na = between(gen, 2, 6);
    const RsSpec spec{random_policy(nx, na, gen, true), random_reward(nx, na, 1.0, gen, true),
                      between(gen, 1, 16)};
    const TabularPolicy exact = rs_exact_policy(spec);
    Rng rng(derive_seed(opts.seed, fmt::format("verify/rs-draws/{}", s)));
    for (std::size_t x = 0; x < nx; ++x) {
      std::vector<double> counts(na, 0.0);
      for (std::size_t i = 0; i < opts.rs_draws; ++i) counts[rs_sample(spec, x, rng)] += 1.0;
      double tv = 0.0;
      for (std::size_t a = 0; a < na; ++a)
        tv += std::abs(counts[a] / static_cast<double>(opts.rs_draws) - exact.prob(x, a));
      worst = std::max(worst, 0.5 * tv);
    }
  }
  return make_result("rs_exact_vs_monte_carlo", kTvTolerance - worst,
                     fmt::format("specs={} draws={} max_tv={:.3e}", opts.rs_specs, opts.rs_draws, worst));
}

PropertyResult verify_prediction_gradient(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, "verify/grad-pred"));
  double worst = 0.0;
  for (std::size_t i = 0; i < opts.grad_instances; ++i) {
    const std::size_t nx = between(rng, 1, 4), na = between(rng, 2, 6);
    const auto data = random_dataset(nx, na, between(rng, 1, 200), rng);
    const RewardTable r = random_reward(nx, na, 1.8, rng, false);
    const auto chk = check_gradient(
        [&](const RewardTable& rr) { return prediction_loss_and_grad(rr, data); }, r);
    worst = std::max(worst, chk.max_rel_error);
  }
  return make_result("gradient_prediction_loss", kGradTolerance - worst,
                     fmt::format("instances={} max_rel_error={:.3e}", opts.grad_instances, worst));
}

PropertyResult verify_pet_gradient(const VerifyOptions& opts, const PetLossExactFn& loss) {
  Rng rng(derive_seed(opts.seed, "verify/grad-pet"));
  double worst = 0.0;
  for (std::size_t i = 0; i < opts.grad_instances; ++i) {
    const std::size_t nx = between(rng, 1, 4), na = between(rng, 2, 6);
    const auto data = random_dataset(nx, na, between(rng, 1, 200), rng);
    const RewardTable r = random_reward(nx, na, 1.8, rng, false);
    const TabularPolicy pi0 = random_policy(nx, na, rng, false);
    const TabularPolicy pi_ref = random_policy(nx, na, rng, true);
    const Distribution mu = random_distribution(nx, rng);
    const double beta = rng.uniform(0.1, 20.0);
    const TabularPolicy pi_t = rs_policy(pi0, r, between(rng, 1, 64));
    const auto chk = check_gradient(
        [&](const RewardTable& rr) { return loss(rr, pi_t, pi_ref, mu, data, beta); }, r);
    worst = std::max(worst, chk.max_rel_error);
  }
  return make_result("gradient_pet_loss", kGradTolerance - worst,
                     fmt::format("instances={} max_rel_error={:.3e}", opts.grad_instances, worst));
}

PropertyResult verify_pet_sampled_gradient(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, "verify/grad-pet-sampled"));
  double worst = 0.0;
  for (std::size_t i = 0; i < opts.grad_instances; ++i) {
    const std::size_t nx = between(rng, 1, 4), na = between(rng, 2, 6);
    const auto data = random_dataset(nx, na, between(rng, 1, 200), rng);
    const RewardTable r = random_reward(nx, na, 1.8, rng, false);
    const TabularPolicy pi0 = random_policy(nx, na, rng, false);
    const TabularPolicy pi_ref = random_policy(nx, na, rng, true);
    const double beta = rng.uniform(0.1, 20.0);
    const auto draws = draw_pet_batch(data, pi0, r, between(rng, 1, 64), pi_ref, between(rng, 1, 64), rng);
    const auto chk = check_gradient(
        [&](const RewardTable& rr) { return pet_loss_sampled(rr, draws, beta); }, r);
    worst = std::max(worst, chk.max_rel_error);
  }
  return make_result("gradient_pet_loss_sampled", kGradTolerance - worst,
                     fmt::format("instances={} max_rel_error={:.3e}", opts.grad_instances, worst));
}

PropertyResult verify_theorem_smoke(const VerifyOptions& opts) {
  constexpr std::size_t kN = 2000;
  constexpr double kDelta = 0.1;
  constexpr std::size_t kRsN = 16;
  std::size_t holds = 0, finite = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < opts.theorem_worlds; ++i) {
    WorldConfig wc;
    wc.n_prompts = 2;
    wc.n_responses = 3;
    wc.reward_bound = 1.0;
    wc.coverage_profile = CoverageProfile::Full;
    wc.seed = derive_seed(opts.seed, fmt::format("verify/theorem/world/{}", i));
    const World world = make_world(wc);
    const auto data = sample_dataset(world, kN, derive_seed(wc.seed, "dataset"));
    TrainConfig tc;
    tc.seed = derive_seed(wc.seed, "proxy");
    const auto proxy = train_proxy(data, wc.reward_bound, tc).reward;
    const double lc = covering_log(wc.n_prompts * wc.n_responses, wc.reward_bound, default_epsilon(kN));
    const PetConfig pc = theorem_pet_config(kN, wc.reward_bound, lc, kDelta, kRsN);
    const auto r_hat = pet_finetune(world, data, proxy, pc).reward;

    CoverageOptions co;
    co.seed = derive_seed(wc.seed, "coverage");
    const auto cov = coverage_coefficient(rs_policy(world.pi0, world.true_reward, kRsN), world, co);
    const BoundReport b = bound_report(world, r_hat, world.true_reward, kN, kDelta, kRsN, cov);
    if (std::isfinite(b.rhs)) ++finite;
    if (b.holds) ++holds;
    worst_slack = std::min(worst_slack, b.rhs - b.gap_empirical);
  }
  const bool ok = holds >= opts.theorem_min_holds && finite == opts.theorem_worlds;
  // Any infinite bound is a failure regardless of how many runs held.
  const double margin = finite == opts.theorem_worlds
                            ? static_cast<double>(holds) - static_cast<double>(opts.theorem_min_holds)
                            : -1.0;
  PropertyResult r = make_result(
      "gap_bound_smoke", margin,
      fmt::format("worlds={} holds={} finite={} min_slack={:.4f}", opts.theorem_worlds, holds,
                  finite, worst_slack));
  r.passed = ok;
  return r;
}

std::string format_property(const PropertyResult& r) {
  return fmt::format("{} {} margin={:.6g} {}", r.passed ? "PASS" : "FAIL", r.name, r.margin, r.detail);
}

VerifySummary cmd_verify(const VerifyOptions& opts, std::ostream& log) {
  VerifySummary s;
  auto run = [&](PropertyResult r) {
    log << format_property(r) << '\n' << std::flush;
    s.all_passed = s.all_passed && r.passed;
    s.results.push_back(std::move(r));
  };
  run(verify_rs_optimality(opts));
  run(verify_rs_monte_carlo(opts));
  run(verify_prediction_gradient(opts));
  run(verify_pet_gradient(opts));
  run(verify_pet_sampled_gradient(opts));
  run(verify_theorem_smoke(opts));
  return s;
}

}  // namespace petbench
