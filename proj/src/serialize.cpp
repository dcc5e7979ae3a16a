#include "petbench/serialize.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include <fmt/format.h>

#include "petbench/error.hpp"

namespace petbench {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::Config, what); }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad(fmt::format("missing field '{}'", key));
  return j.at(key);
}

void reject_unknown(const Json& j, std::initializer_list<std::string_view> known,
                    const char* what) {
  if (!j.is_object()) bad(fmt::format("{} must be a JSON object", what));
  for (const auto& [key, _] : j.items()) {
    bool ok = key == "schema_version";
    for (auto k : known) ok = ok || key == k;
    if (!ok) bad(fmt::format("unknown field '{}' in {}", key, what));
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    bad(fmt::format("field '{}': {}", key, e.what()));
  }
}

void read_opt_number(const Json& j, const char* key, double& out) {
  if (j.contains(key)) out = number_from_json(j.at(key));
}

std::size_t as_index(const Json& j) {
  if (!j.is_number_unsigned()) bad("expected a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace

Json number_or_tag(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
  }
  bad("expected a number");
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (double v : m.row(i)) row.push_back(number_or_tag(v));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) bad("matrix must be a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) {
    if (!r.is_array()) bad("matrix row must be an array");
    std::vector<double> row;
    for (const auto& v : r) row.push_back(number_from_json(v));
    rows.push_back(std::move(row));
  }
  return Matrix::from_rows(rows);
}

Json to_json(const Distribution& d) {
  Json arr = Json::array();
  for (double p : d.probs()) arr.push_back(p);
  return arr;
}

Distribution distribution_from_json(const Json& j) {
  if (!j.is_array()) bad("distribution must be an array");
  std::vector<double> p;
  for (const auto& v : j) p.push_back(number_from_json(v));
  return Distribution(std::move(p));
}

Json to_json(const RewardTable& r) {
  Json j;
  j["bound"] = r.bound();
  j["values"] = to_json(r.values());
  return j;
}

RewardTable reward_from_json(const Json& j) {
  return RewardTable(matrix_from_json(field(j, "values")), number_from_json(field(j, "bound")));
}

Json to_json(const TabularPolicy& p) {
  Json j;
  j["probs"] = to_json(p.probs());
  return j;
}

TabularPolicy policy_from_json(const Json& j) {
  return TabularPolicy(matrix_from_json(field(j, "probs")));
}

Json to_json(const PreferenceDataset& d) {
  Json j;
  j["n_prompts"] = d.n_prompts();
  j["n_responses"] = d.n_responses();
  Json tuples = Json::array();
  for (const auto& t : d.tuples()) tuples.push_back(Json::array({t.x, t.a1, t.a2, t.sigma}));
  j["tuples"] = std::move(tuples);
  return j;
}

PreferenceDataset dataset_from_json(const Json& j) {
  std::vector<PreferenceTuple> tuples;
  for (const auto& t : field(j, "tuples")) {
    if (!t.is_array() || t.size() != 4) bad("tuple must be [x, a1, a2, sigma]");
    if (!t[3].is_number_integer()) bad("sigma must be an integer");
    tuples.push_back({as_index(t[0]), as_index(t[1]), as_index(t[2]), t[3].get<int>()});
  }
  return PreferenceDataset(PromptSpace{as_index(field(j, "n_prompts"))},
                           ResponseSpace{as_index(field(j, "n_responses"))}, std::move(tuples));
}

Json to_json(const PairDistribution& p) {
  Json j;
  j["n_prompts"] = p.n_prompts();
  j["n_responses"] = p.n_responses();
  Json xs = Json::array();
  for (std::size_t x = 0; x < p.n_prompts(); ++x) {
    Matrix slice(p.n_responses(), p.n_responses());
    for (std::size_t a1 = 0; a1 < p.n_responses(); ++a1)
      for (std::size_t a2 = 0; a2 < p.n_responses(); ++a2) slice(a1, a2) = p(x, a1, a2);
    xs.push_back(to_json(slice));
  }
  j["probs"] = std::move(xs);
  return j;
}

PairDistribution pair_distribution_from_json(const Json& j) {
  const std::size_t nx = as_index(field(j, "n_prompts"));
  const std::size_t na = as_index(field(j, "n_responses"));
  const Json& xs = field(j, "probs");
  if (!xs.is_array() || xs.size() != nx) bad("pair distribution has the wrong number of prompts");
  std::vector<double> probs;
  probs.reserve(nx * na * na);
  for (const auto& s : xs) {
    const Matrix m = matrix_from_json(s);
    if (m.rows() != na || m.cols() != na) bad("pair distribution slice has the wrong shape");
    probs.insert(probs.end(), m.data().begin(), m.data().end());
  }
  return PairDistribution(nx, na, std::move(probs));
}

Json to_json(const WorldConfig& c) {
  Json j;
  j["n_prompts"] = c.n_prompts;
  j["n_responses"] = c.n_responses;
  j["reward_bound"] = c.reward_bound;
  j["coverage_profile"] = std::string(to_string(c.coverage_profile));
  j["n_uncovered"] = c.n_uncovered;
  j["base_temperature"] = c.base_temperature;
  j["ref_temperature"] = c.ref_temperature;
  j["seed"] = c.seed;
  return j;
}

WorldConfig world_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"n_prompts", "n_responses", "reward_bound", "coverage_profile", "n_uncovered",
                  "base_temperature", "ref_temperature", "seed"},
                 "world config");
  WorldConfig c;
  read_opt(j, "n_prompts", c.n_prompts);
  read_opt(j, "n_responses", c.n_responses);
  read_opt_number(j, "reward_bound", c.reward_bound);
  if (j.contains("coverage_profile")) {
    std::string s;
    read_opt(j, "coverage_profile", s);
    c.coverage_profile = parse_coverage_profile(s);
  }
  read_opt(j, "n_uncovered", c.n_uncovered);
  read_opt_number(j, "base_temperature", c.base_temperature);
  read_opt_number(j, "ref_temperature", c.ref_temperature);
  read_opt(j, "seed", c.seed);
  return c;
}

Json to_json(const World& w) {
  Json j;
  j["config"] = to_json(w.config);
  j["seed"] = w.seed;
  j["true_reward"] = to_json(w.true_reward);
  j["mu"] = to_json(w.mu);
  j["pair_dist"] = to_json(w.pair_dist);
  j["pi_ref"] = to_json(w.pi_ref);
  j["pi0"] = to_json(w.pi0);
  j["uncovered"] = w.uncovered;
  return j;
}

World world_from_json(const Json& j) {
  const WorldConfig cfg = world_config_from_json(field(j, "config"));
  World w{PromptSpace{cfg.n_prompts},
          ResponseSpace{cfg.n_responses},
          reward_from_json(field(j, "true_reward")),
          distribution_from_json(field(j, "mu")),
          pair_distribution_from_json(field(j, "pair_dist")),
          policy_from_json(field(j, "pi_ref")),
          policy_from_json(field(j, "pi0")),
          field(j, "seed").get<std::uint64_t>(),
          field(j, "uncovered").get<std::vector<std::vector<std::size_t>>>(),
          cfg};
  if (w.true_reward.n_prompts() != cfg.n_prompts || w.true_reward.n_responses() != cfg.n_responses ||
      w.mu.size() != cfg.n_prompts || w.pi_ref.probs().rows() != cfg.n_prompts ||
      w.pi0.probs().rows() != cfg.n_prompts || w.pair_dist.n_prompts() != cfg.n_prompts ||
      w.pair_dist.n_responses() != cfg.n_responses || w.uncovered.size() != cfg.n_prompts)
    throw Error(ErrorKind::Shape, "world document has inconsistent shapes");
  return w;
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["init"] = std::string(to_string(c.init));
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  reject_unknown(j, {"learning_rate", "batch_size", "epochs", "init", "seed"}, "proxy config");
  TrainConfig c;
  read_opt_number(j, "learning_rate", c.learning_rate);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "epochs", c.epochs);
  if (j.contains("init")) c.init = parse_reward_init(j.at("init").get<std::string>());
  read_opt(j, "seed", c.seed);
  return c;
}

Json to_json(const PetConfig& c) {
  Json j;
  j["beta"] = c.beta;
  j["n"] = c.n;
  j["iterations"] = c.iterations;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["mode"] = std::string(to_string(c.mode));
  j["tolerance"] = c.tolerance;
  j["seed"] = c.seed;
  return j;
}

PetConfig pet_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"beta", "n", "iterations", "batch_size", "learning_rate", "mode", "tolerance",
                  "seed"},
                 "pet config");
  PetConfig c;
  read_opt_number(j, "beta", c.beta);
  read_opt(j, "n", c.n);
  read_opt(j, "iterations", c.iterations);
  read_opt(j, "batch_size", c.batch_size);
  read_opt_number(j, "learning_rate", c.learning_rate);
  if (j.contains("mode")) c.mode = parse_pet_mode(j.at("mode").get<std::string>());
  read_opt_number(j, "tolerance", c.tolerance);
  read_opt(j, "seed", c.seed);
  return c;
}

Json to_json(const OptConfig& c) {
  Json j;
  j["method"] = std::string(to_string(c.method));
  j["eta"] = c.eta;
  j["pg_steps"] = c.pg_steps;
  j["pg_batch"] = c.pg_batch;
  j["pg_lr"] = c.pg_lr;
  j["pg_epochs"] = c.pg_epochs;
  j["clip_epsilon"] = c.clip_epsilon;
  j["seed"] = c.seed;
  return j;
}

OptConfig opt_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"method", "eta", "pg_steps", "pg_batch", "pg_lr", "pg_epochs", "clip_epsilon",
                  "seed"},
                 "opt config");
  OptConfig c;
  if (j.contains("method")) c.method = parse_opt_method(j.at("method").get<std::string>());
  read_opt_number(j, "eta", c.eta);
  read_opt(j, "pg_steps", c.pg_steps);
  read_opt(j, "pg_batch", c.pg_batch);
  read_opt_number(j, "pg_lr", c.pg_lr);
  read_opt(j, "pg_epochs", c.pg_epochs);
  read_opt_number(j, "clip_epsilon", c.clip_epsilon);
  read_opt(j, "seed", c.seed);
  return c;
}

Json to_json(const BoundReport& b) {
  Json j;
  j["beta_star"] = b.beta_star;
  j["rhs"] = number_or_tag(b.rhs);
  j["gap_empirical"] = b.gap_empirical;
  j["covering_log"] = b.covering_log;
  j["epsilon"] = b.epsilon;
  j["delta"] = b.delta;
  j["N"] = b.n_data;
  j["R"] = b.bound;
  j["coverage"] = number_or_tag(b.coverage);
  j["coverage_unbounded"] = b.coverage_unbounded;
  j["coverage_is_estimate"] = true;
  j["holds"] = b.holds;
  return j;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  Json doc = Json::object();
  doc["schema_version"] = kSchemaVersion;
  for (const auto& [k, v] : j.items()) doc[k] = v;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot open {} for writing", path.string()));
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, fmt::format("write to {} failed", path.string()));
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    bad(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace petbench
