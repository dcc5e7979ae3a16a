#include "petbench/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>
#include <utility>

#include <fmt/format.h>

#include "petbench/error.hpp"
#include "petbench/rng.hpp"
#include "petbench/rs.hpp"

#ifndef PETBENCH_VERSION
#define PETBENCH_VERSION "unknown"
#endif

namespace petbench {

namespace fs = std::filesystem;

const char* version_string() { return PETBENCH_VERSION; }

namespace {

template <class F>
decltype(auto) stage(std::string_view name, F&& f) {
  try {
    return std::forward<F>(f)();
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("[{}] {}", name, e.detail()));
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Io, fmt::format("[{}] {}", name, e.what()));
  }
}

std::string num(double v) { return fmt::format("{}", v); }

std::string provenance_line(const RunConfig& cfg) {
  return fmt::format("# petbench {} config={}\n", version_string(), to_json(cfg).dump());
}

Json with_provenance(const RunConfig& cfg, Json body) {
  Json j = Json::object();
  j["provenance"] = {{"version", version_string()}, {"config", to_json(cfg)}};
  for (auto& [k, v] : body.items()) j[k] = v;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot open {} for writing", path.string()));
  out << text;
  if (!out) throw Error(ErrorKind::Io, fmt::format("write to {} failed", path.string()));
}

std::string policy_file(std::size_t opt_index, const std::string& reward_model) {
  return fmt::format("policy_{}_{}.json", opt_index, reward_model);
}

std::string curve_csv(const RunConfig& cfg, const std::vector<EpochStats>& curve) {
  std::string s = provenance_line(cfg) + "epoch,loss,accuracy\n";
  for (const auto& e : curve) s += fmt::format("{},{},{}\n", e.epoch, num(e.loss), num(e.accuracy));
  return s;
}

std::string trace_csv(const RunConfig& cfg, const std::vector<PetIteration>& trace) {
  std::string s = provenance_line(cfg) + "t,pess_loss,pred_loss,value_gap\n";
  for (const auto& it : trace)
    s += fmt::format("{},{},{},{}\n", it.t, num(it.pess_loss), num(it.pred_loss), num(it.value_gap));
  return s;
}

Json certificate_json(const PessimismCertificate& c) {
  return {{"score_pet", c.score_pet},
          {"score_proxy", c.score_proxy},
          {"loss_pet", c.loss_pet},
          {"loss_proxy", c.loss_proxy},
          {"pet_more_pessimistic", c.pet_more_pessimistic}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

RunConfig RunConfig::defaults() {
  RunConfig c;
  OptConfig greedy;
  OptConfig kl;
  kl.method = OptMethod::KlClosedForm;
  kl.eta = 0.1;
  c.opt = {greedy, kl};
  return c;
}

void RunConfig::validate() const {
  if (dataset_N == 0) throw Error(ErrorKind::Config, "dataset_N must be at least 1");
  world.validate();
  if (!(proxy.learning_rate > 0.0)) throw Error(ErrorKind::Config, "proxy learning_rate must be positive");
  if (proxy.batch_size == 0 || proxy.batch_size > dataset_N)
    throw Error(ErrorKind::Config,
                fmt::format("proxy batch_size must lie in [1, dataset_N = {}]", dataset_N));
  pet.validate(dataset_N);
  if (opt.empty()) throw Error(ErrorKind::Config, "opt list must not be empty");
  for (const auto& o : opt) o.validate();
  if (bound.enabled) {
    if (!(bound.delta > 0.0 && bound.delta < 1.0))
      throw Error(ErrorKind::Config, "bound delta must lie in (0, 1)");
    if (bound.coverage_starts == 0) throw Error(ErrorKind::Config, "coverage_starts must be >= 1");
  }
}

RunConfig RunConfig::resolved() const {
  RunConfig c = *this;
  c.world.seed = derive_seed(seed, "world");
  c.proxy.seed = derive_seed(seed, "proxy");
  c.pet.seed = derive_seed(seed, "pet");
  for (std::size_t i = 0; i < c.opt.size(); ++i)
    c.opt[i].seed = derive_seed(seed, fmt::format("opt/{}", i));
  return c;
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "run config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"schema_version", "scenario", "seed",   "dataset_N",
                                  "world",          "proxy",    "pet",    "opt",
                                  "bound",          "output_dir", "provenance"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error(ErrorKind::Config, fmt::format("unknown field '{}' in run config", key));
  }
  RunConfig c = RunConfig::defaults();
  try {
    if (j.contains("scenario")) c.scenario = j.at("scenario").get<std::string>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("dataset_N")) c.dataset_N = j.at("dataset_N").get<std::size_t>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("bound")) {
      const Json& b = j.at("bound");
      if (b.contains("enabled")) c.bound.enabled = b.at("enabled").get<bool>();
      if (b.contains("delta")) c.bound.delta = b.at("delta").get<double>();
      if (b.contains("coverage_starts")) c.bound.coverage_starts = b.at("coverage_starts").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  if (j.contains("world")) c.world = world_config_from_json(j.at("world"));
  if (j.contains("proxy")) c.proxy = train_config_from_json(j.at("proxy"));
  if (j.contains("pet")) c.pet = pet_config_from_json(j.at("pet"));
  if (j.contains("opt")) {
    if (!j.at("opt").is_array()) throw Error(ErrorKind::Config, "opt must be an array");
    c.opt.clear();
    for (const auto& o : j.at("opt")) c.opt.push_back(opt_config_from_json(o));
  }
  return c;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["scenario"] = c.scenario;
  j["seed"] = c.seed;
  j["dataset_N"] = c.dataset_N;
  j["world"] = to_json(c.world);
  j["proxy"] = to_json(c.proxy);
  j["pet"] = to_json(c.pet);
  Json opts = Json::array();
  for (const auto& o : c.opt) opts.push_back(to_json(o));
  j["opt"] = std::move(opts);
  j["bound"] = {{"enabled", c.bound.enabled},
                {"delta", c.bound.delta},
                {"coverage_starts", c.bound.coverage_starts}};
  return j;
}

namespace {

void apply_env_seed(RunConfig& c) {
  const char* env = std::getenv("PETBENCH_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw Error(ErrorKind::Config, fmt::format("PETBENCH_SEED '{}' is not an integer", env));
  c.seed = v;
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
  RunConfig c = run_config_from_json(read_json_file(path));
  apply_env_seed(c);
  return c;
}

RunConfig load_run_config(const std::optional<fs::path>& path) {
  if (path) return load_run_config(*path);
  RunConfig c = RunConfig::defaults();
  apply_env_seed(c);
  return c;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

std::string format_report_row(const ReportRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{}", r.scenario, to_string(r.method), r.reward_model,
                     num(r.eta), num(r.eval.v_true), num(r.eval.v_proxy), num(r.eval.v_pet),
                     num(r.eval.kl_to_ref), r.eval.kl_support_ok ? 1 : 0);
}

std::string report_csv(const RunConfig& cfg, const std::vector<ReportRow>& rows) {
  std::string s = provenance_line(cfg) + kReportHeader + "\n";
  for (const auto& r : rows) s += format_report_row(r) + "\n";
  return s;
}

namespace {

class ArtifactWriter {
 public:
  ArtifactWriter(const RunConfig& cfg, const fs::path* dir) : cfg_(cfg), dir_(dir) {}

  bool active() const { return dir_ != nullptr; }

  void json(const std::string& name, Json body) const {
    if (dir_) write_json_file(*dir_ / name, with_provenance(cfg_, std::move(body)));
  }
  void text(const std::string& name, const std::string& body) const {
    if (dir_) write_text(*dir_ / name, body);
  }

 private:
  const RunConfig& cfg_;
  const fs::path* dir_;
};

ExperimentReport run_impl(const RunConfig& raw, const fs::path* out_dir) {
  stage("config", [&] { raw.validate(); });
  const RunConfig cfg = raw.resolved();
  if (out_dir) stage("output", [&] { fs::create_directories(*out_dir); });
  ArtifactWriter out(cfg, out_dir);
  stage("output", [&] { out.json("config.json", Json::object()); });

  World world = stage("world", [&] {
    World w = make_world(cfg.world);
    out.json("world.json", to_json(w));
    return w;
  });
  PreferenceDataset data = stage("dataset", [&] {
    auto d = sample_dataset(world, cfg.dataset_N, derive_seed(cfg.seed, "dataset"));
    out.json("dataset.json", to_json(d));
    return d;
  });
  TrainResult proxy = stage("proxy", [&] {
    auto r = train_proxy(data, cfg.world.reward_bound, cfg.proxy);
    out.json("proxy_reward.json", to_json(r.reward));
    out.text("proxy_curve.csv", curve_csv(cfg, r.curve));
    return r;
  });
  PetResult pet = stage("pet", [&] {
    auto r = pet_finetune(world, data, proxy.reward, cfg.pet);
    out.json("pet_reward.json", to_json(r.reward));
    out.text("pet_trace.csv", trace_csv(cfg, r.trace));
    return r;
  });
  PessimismCertificate cert = stage("pet", [&] {
    auto c = pessimism_certificate(pet.reward, proxy.reward, world, data, cfg.pet.n);
    out.json("certificate.json", certificate_json(c));
    return c;
  });

  ExperimentReport rep{cfg, world, data, proxy, pet, cert, {}, {}, std::nullopt};
  stage("policy", [&] {
    for (std::size_t i = 0; i < cfg.opt.size(); ++i) {
      for (const char* which : {"proxy", "pet"}) {
        const RewardTable& r = std::string_view(which) == "proxy" ? proxy.reward : pet.reward;
        TabularPolicy pi = optimize_policy(r, world, cfg.opt[i]);
        out.json(policy_file(i, which), to_json(pi));
        ReportRow row{cfg.scenario, i, cfg.opt[i].method, which, cfg.opt[i].eta,
                      evaluate_policy(pi, world, proxy.reward, pet.reward)};
        rep.policies.push_back(std::move(pi));
        rep.rows.push_back(std::move(row));
      }
    }
  });
  out.text("report.csv", report_csv(cfg, rep.rows));

  if (cfg.bound.enabled) {
    rep.bound = stage("bound", [&] {
      const TabularPolicy target = rs_policy(world.pi0, world.true_reward, cfg.pet.n);
      CoverageOptions opts;
      opts.n_starts = cfg.bound.coverage_starts;
      opts.seed = derive_seed(cfg.seed, "coverage");
      const CoverageEstimate cov = coverage_coefficient(target, world, opts);
      BoundReport b = bound_report(world, pet.reward, world.true_reward, cfg.dataset_N,
                                   cfg.bound.delta, cfg.pet.n, cov);
      out.json("bound_report.json", to_json(b));
      return b;
    });
  }
  return rep;
}

}  // namespace

ExperimentReport run_pipeline(const RunConfig& cfg) { return run_impl(cfg, nullptr); }

ExperimentReport cmd_pipeline(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  return run_impl(cfg, &dir);
}

std::vector<ReportRow> cmd_eval(const fs::path& run_dir) {
  return stage("eval", [&] {
    const Json cj = read_json_file(run_dir / "config.json");
    if (!cj.contains("provenance")) throw Error(ErrorKind::Config, "config.json lacks provenance");
    const RunConfig cfg = run_config_from_json(cj.at("provenance").at("config"));
    const World world = world_from_json(read_json_file(run_dir / "world.json"));
    const RewardTable proxy = reward_from_json(read_json_file(run_dir / "proxy_reward.json"));
    const RewardTable pet = reward_from_json(read_json_file(run_dir / "pet_reward.json"));
    std::vector<ReportRow> rows;
    for (std::size_t i = 0; i < cfg.opt.size(); ++i)
      for (const char* which : {"proxy", "pet"}) {
        const TabularPolicy pi = policy_from_json(read_json_file(run_dir / policy_file(i, which)));
        rows.push_back({cfg.scenario, i, cfg.opt[i].method, which, cfg.opt[i].eta,
                        evaluate_policy(pi, world, proxy, pet)});
      }
    return rows;
  });
}

// ---------------------------------------------------------------------------
// RS comparison
// ---------------------------------------------------------------------------

std::vector<RsCompareRow> cmd_rs_compare(const RunConfig& base, const std::vector<std::size_t>& ns,
                                         std::size_t replicates) {
  if (ns.empty()) throw Error(ErrorKind::Parameter, "rs-compare needs a non-empty n list");
  for (std::size_t n : ns)
    if (n == 0) throw Error(ErrorKind::Parameter, "rs-compare n values must be >= 1");
  if (replicates == 0) throw Error(ErrorKind::Parameter, "rs-compare needs replicates >= 1");

  std::vector<RsCompareRow> rows;
  std::vector<double> sum_pet(ns.size(), 0.0), sum_proxy(ns.size(), 0.0);
  for (std::size_t rep = 0; rep < replicates; ++rep) {
    RunConfig c = base;
    c.seed = base.seed + rep;
    c.bound.enabled = false;
    stage("config", [&] { c.validate(); });
    c = c.resolved();
    const World world = stage("world", [&] { return make_world(c.world); });
    const auto data = stage("dataset", [&] {
      return sample_dataset(world, c.dataset_N, derive_seed(c.seed, "dataset"));
    });
    const auto proxy = stage("proxy", [&] { return train_proxy(data, c.world.reward_bound, c.proxy).reward; });
    const auto pet = stage("pet", [&] { return pet_finetune(world, data, proxy, c.pet).reward; });
    for (std::size_t k = 0; k < ns.size(); ++k) {
      const double vp = value(world.true_reward, rs_policy(world.pi0, pet, ns[k]), world.mu);
      const double vx = value(world.true_reward, rs_policy(world.pi0, proxy, ns[k]), world.mu);
      sum_pet[k] += vp;
      sum_proxy[k] += vx;
      rows.push_back({std::to_string(c.seed), ns[k], vp, vx});
    }
  }
  for (std::size_t k = 0; k < ns.size(); ++k)
    rows.push_back({"mean", ns[k], sum_pet[k] / static_cast<double>(replicates),
                    sum_proxy[k] / static_cast<double>(replicates)});
  return rows;
}

std::string rs_compare_csv(const RunConfig& cfg, const std::vector<RsCompareRow>& rows) {
  std::string s = provenance_line(cfg) + "seed,n,V_true_rs_pet,V_true_rs_proxy\n";
  for (const auto& r : rows) s += fmt::format("{},{},{},{}\n", r.seed, r.n, num(r.v_rs_pet), num(r.v_rs_proxy));
  return s;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

SweepGrid sweep_grid_from_json(const Json& j, const RunConfig& base) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "sweep grid must be a JSON object");
  SweepGrid g;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "schema_version") continue;
      if (key != "replicates" && (!v.is_array() || v.empty()))
        throw Error(ErrorKind::Config, fmt::format("grid axis '{}' must be a non-empty array", key));
      if (key == "beta") g.beta = v.get<std::vector<double>>();
      else if (key == "n") g.n = v.get<std::vector<std::size_t>>();
      else if (key == "eta") g.eta = v.get<std::vector<double>>();
      else if (key == "N") g.N = v.get<std::vector<std::size_t>>();
      else if (key == "coverage_profile") {
        for (const auto& s : v) g.coverage_profile.push_back(parse_coverage_profile(s.get<std::string>()));
      } else if (key == "replicates") g.replicates = v.get<std::size_t>();
      else throw Error(ErrorKind::Config, fmt::format("unknown grid axis '{}'", key));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  if (g.replicates == 0) throw Error(ErrorKind::Config, "replicates must be >= 1");
  if (g.beta.empty()) g.beta = {base.pet.beta};
  if (g.n.empty()) g.n = {base.pet.n};
  if (g.N.empty()) g.N = {base.dataset_N};
  if (g.coverage_profile.empty()) g.coverage_profile = {base.world.coverage_profile};
  return g;
}

std::vector<SweepCell> expand_sweep(const RunConfig& base, const SweepGrid& grid) {
  std::vector<SweepCell> cells;
  const std::vector<double> etas = grid.eta.empty() ? std::vector<double>{-1.0} : grid.eta;
  std::size_t index = 0;
  for (CoverageProfile prof : grid.coverage_profile)
    for (std::size_t N : grid.N)
      for (double beta : grid.beta)
        for (std::size_t n : grid.n)
          for (double eta : etas) {
            for (std::size_t rep = 0; rep < grid.replicates; ++rep) {
              RunConfig c = base;
              c.world.coverage_profile = prof;
              c.dataset_N = N;
              c.pet.beta = beta;
              c.pet.n = n;
              if (eta >= 0.0) {
                OptConfig o;
                o.eta = eta;
                o.method = eta > 0.0 ? OptMethod::KlClosedForm : OptMethod::GreedyExact;
                c.opt = {o};
              }
              c.seed = base.seed + rep;
              c.output_dir = base.output_dir / fmt::format("cell_{}_rep_{}", index, rep);
              cells.push_back({index, rep, std::move(c), false, {}, {}});
            }
            ++index;
          }
  return cells;
}

std::vector<SweepCell> cmd_sweep(const RunConfig& base, const SweepGrid& grid, std::size_t jobs) {
  std::vector<SweepCell> cells = expand_sweep(base, grid);
  fs::create_directories(base.output_dir);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& cell = cells[i];
      try {
        cell.rows = cmd_pipeline(cell.config).rows;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::string csv = provenance_line(base) +
                    "cell,replicate,seed,beta,n,eta,N,coverage_profile,status,method,reward_model,"
                    "V_true,V_proxy,V_pet,KL,kl_support_ok,error\n";
  for (const auto& cell : cells) {
    const RunConfig& c = cell.config;
    const std::string prefix =
        fmt::format("{},{},{},{},{},", cell.index, cell.replicate, c.seed, num(c.pet.beta), c.pet.n);
    const std::string suffix =
        fmt::format("{},{}", c.dataset_N, to_string(c.world.coverage_profile));
    if (!cell.ok) {
      std::string err = cell.error;
      for (char& ch : err)
        if (ch == ',' || ch == '\n') ch = ';';
      csv += prefix + "," + suffix + ",failed" + std::string(8, ',') + err + "\n";
      continue;
    }
    for (const auto& r : cell.rows)
      csv += prefix + num(r.eta) + "," + suffix +
             fmt::format(",ok,{},{},{},{},{},{},{},", to_string(r.method), r.reward_model,
                         num(r.eval.v_true), num(r.eval.v_proxy), num(r.eval.v_pet),
                         num(r.eval.kl_to_ref), r.eval.kl_support_ok ? 1 : 0) +
             "\n";
  }
  write_text(base.output_dir / "sweep.csv", csv);
  return cells;
}

}  // namespace petbench
