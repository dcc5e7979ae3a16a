#pragma once

// End-to-end experiment runs: world generation, preference data, proxy reward
// training, pessimistic fine-tuning, policy optimization on both rewards and
// evaluation against the true reward.
//
// Seeds: every stage draws from derive_seed(seed, <stage>), with stage names
// "world", "dataset", "proxy", "pet", "opt/<i>" and "coverage". Seed fields in
// the nested configs are overwritten by that derivation. Precedence for the
// top-level seed is config file < PETBENCH_SEED < --seed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "petbench/core.hpp"
#include "petbench/pet.hpp"
#include "petbench/policyopt.hpp"
#include "petbench/rewardmodel.hpp"
#include "petbench/serialize.hpp"
#include "petbench/theory.hpp"
#include "petbench/worldgen.hpp"

namespace petbench {

/// git-describe style version baked in at build time.
const char* version_string();

struct BoundConfig {
  bool enabled = true;
  double delta = 0.1;
  std::size_t coverage_starts = 32;
};

struct RunConfig {
  std::string scenario = "default";
  std::uint64_t seed = 0;
  std::size_t dataset_N = 20000;
  WorldConfig world;
  TrainConfig proxy;
  PetConfig pet;
  std::vector<OptConfig> opt;
  BoundConfig bound;
  std::filesystem::path output_dir = "out";

  /// Greedy plus one KL-regularized optimizer: the {eta = 0, eta > 0} grid.
  static RunConfig defaults();

  /// Throws Config. Runs before any stage does work.
  void validate() const;
  /// Copies derived stage seeds into the nested configs.
  RunConfig resolved() const;
};

RunConfig run_config_from_json(const Json& j);
/// Everything except output_dir, which does not affect results.
Json to_json(const RunConfig& c);

/// Parses a config file and applies PETBENCH_SEED when set.
RunConfig load_run_config(const std::filesystem::path& path);
/// Defaults plus PETBENCH_SEED when no file is given.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path);

struct ReportRow {
  std::string scenario;
  std::size_t opt_index = 0;
  OptMethod method = OptMethod::GreedyExact;
  std::string reward_model;  // "proxy" or "pet"
  double eta = 0.0;
  EvalRow eval;
};

struct ExperimentReport {
  RunConfig config;  // resolved
  World world;
  PreferenceDataset dataset;
  TrainResult proxy;
  PetResult pet;
  PessimismCertificate certificate;
  std::vector<TabularPolicy> policies;  // parallel to rows
  std::vector<ReportRow> rows;
  std::optional<BoundReport> bound;
};

/// Runs all stages in memory. Stage failures are rethrown with the stage name
/// prefixed to the message.
ExperimentReport run_pipeline(const RunConfig& cfg);

/// run_pipeline, then writes every artifact under cfg.output_dir.
ExperimentReport cmd_pipeline(const RunConfig& cfg);

/// Fixed column order: scenario,method,reward_model,eta,V_true,V_proxy,V_pet,KL,kl_support_ok
inline constexpr const char* kReportHeader =
    "scenario,method,reward_model,eta,V_true,V_proxy,V_pet,KL,kl_support_ok";

/// CSV text with a leading "# petbench <version> config=<json>" line.
std::string report_csv(const RunConfig& cfg, const std::vector<ReportRow>& rows);
std::string format_report_row(const ReportRow& row);

/// Recomputes report rows from a pipeline output directory using only the
/// persisted world, reward and policy files.
std::vector<ReportRow> cmd_eval(const std::filesystem::path& run_dir);

struct RsCompareRow {
  std::string seed;  // replicate seed, or "mean"
  std::size_t n = 0;
  double v_rs_pet = 0.0;
  double v_rs_proxy = 0.0;
};

inline const std::vector<std::size_t> kDefaultRsNs = {16, 32, 64, 128};

/// V_true of pi_RS(pi0, r_pet, n) and pi_RS(pi0, r_proxy, n) for each n, per
/// replicate seed (seed, seed + 1, ...) followed by the means.
std::vector<RsCompareRow> cmd_rs_compare(const RunConfig& cfg, const std::vector<std::size_t>& ns,
                                         std::size_t replicates);
std::string rs_compare_csv(const RunConfig& cfg, const std::vector<RsCompareRow>& rows);

struct SweepGrid {
  std::vector<double> beta;
  std::vector<std::size_t> n;
  std::vector<double> eta;
  std::vector<std::size_t> N;
  std::vector<CoverageProfile> coverage_profile;
  std::size_t replicates = 1;
};

/// Axes missing from the JSON take the base config's single value.
SweepGrid sweep_grid_from_json(const Json& j, const RunConfig& base);

struct SweepCell {
  std::size_t index = 0;
  std::size_t replicate = 0;
  RunConfig config;
  bool ok = false;
  std::string error;
  std::vector<ReportRow> rows;
};

/// Expands the Cartesian grid. An eta axis replaces the optimizer list with a
/// single optimizer per cell: greedy for eta = 0, the KL closed form otherwise.
std::vector<SweepCell> expand_sweep(const RunConfig& base, const SweepGrid& grid);

/// Runs every cell (one pipeline per cell, `jobs` at a time) into
/// <output_dir>/cell_<i>_rep_<r>/ and writes <output_dir>/sweep.csv. Cell
/// failures are recorded and do not stop the sweep.
std::vector<SweepCell> cmd_sweep(const RunConfig& base, const SweepGrid& grid, std::size_t jobs);

}  // namespace petbench
