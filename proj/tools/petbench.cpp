// petbench command-line driver.
//
//   petbench pipeline   --config cfg.json [--seed S] [--out DIR] [--mode exact|sampled]
//   petbench rs-compare --config cfg.json [--n 16,32,64,128] [--replicates K]
//   petbench verify     [--seed S]
//   petbench sweep      --config cfg.json --grid grid.json [--jobs K] [--out DIR]
//   petbench world gen  --config cfg.json [--out DIR]
//   petbench eval       --run DIR

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "petbench/error.hpp"
#include "petbench/pipeline.hpp"
#include "petbench/serialize.hpp"
#include "petbench/verify.hpp"

namespace fs = std::filesystem;
using namespace petbench;

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_mode = true) {
  cmd->add_option("--config", f.config, "JSON run configuration (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Top-level seed; overrides the config and PETBENCH_SEED");
  cmd->add_option("--out", f.out, "Output directory");
  if (with_mode)
    cmd->add_option("--mode", f.mode, "PET gradient mode")
        ->check(CLI::IsMember({"exact", "sampled"}));
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c = load_run_config(f.config ? std::optional<fs::path>(*f.config) : std::nullopt);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.output_dir = *f.out;
  if (f.mode) c.pet.mode = parse_pet_mode(*f.mode);
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot open {} for writing", p.string()));
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"petbench: pessimistic reward fine-tuning on small synthetic worlds"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  CommonFlags pipe_f;
  auto* pipe = app.add_subcommand("pipeline", "Reward modeling, PET and policy optimization end to end");
  add_common(pipe, pipe_f);

  CommonFlags rs_f;
  std::vector<std::size_t> rs_ns = kDefaultRsNs;
  std::size_t rs_reps = 1;
  auto* rs = app.add_subcommand("rs-compare", "True value of best-of-n on PET vs proxy reward");
  add_common(rs, rs_f);
  rs->add_option("--n", rs_ns, "Best-of-n sizes")->delimiter(',');
  rs->add_option("--replicates", rs_reps, "Seeds seed, seed+1, ...")->check(CLI::PositiveNumber);

  VerifyOptions vopts;
  auto* ver = app.add_subcommand("verify", "Run the property suites");
  ver->add_option("--seed", vopts.seed, "Suite seed");

  CommonFlags sw_f;
  std::string grid_path;
  std::size_t jobs = 1;
  auto* sw = app.add_subcommand("sweep", "Cartesian parameter sweep");
  add_common(sw, sw_f);
  sw->add_option("--grid", grid_path, "JSON grid: beta, n, eta, N, coverage_profile, replicates")
      ->required()
      ->check(CLI::ExistingFile);
  sw->add_option("--jobs", jobs, "Concurrent cells")->check(CLI::PositiveNumber);

  auto* world = app.add_subcommand("world", "World utilities");
  world->require_subcommand(1);
  CommonFlags wg_f;
  auto* wgen = world->add_subcommand("gen", "Generate and save a world");
  add_common(wgen, wg_f, false);

  std::string eval_dir;
  auto* ev = app.add_subcommand("eval", "Re-evaluate persisted policies of a pipeline run");
  ev->add_option("--run", eval_dir, "Pipeline output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pipe) {
      const RunConfig cfg = resolve(pipe_f);
      const auto rep = cmd_pipeline(cfg);
      std::cout << report_csv(rep.config, rep.rows);
      std::cerr << fmt::format("wrote {}\n", cfg.output_dir.string());
    } else if (*rs) {
      const RunConfig cfg = resolve(rs_f);
      const auto rows = cmd_rs_compare(cfg, rs_ns, rs_reps);
      const std::string csv = rs_compare_csv(cfg.resolved(), rows);
      if (rs_f.out) write_file(cfg.output_dir / "rs_compare.csv", csv);
      std::cout << csv;
    } else if (*ver) {
      const auto summary = cmd_verify(vopts, std::cout);
      std::cout << (summary.all_passed ? "all properties passed\n" : "verification FAILED\n");
      return summary.all_passed ? 0 : 1;
    } else if (*sw) {
      const RunConfig base = resolve(sw_f);
      const SweepGrid grid = sweep_grid_from_json(read_json_file(grid_path), base);
      const auto cells = cmd_sweep(base, grid, jobs);
      std::size_t failed = 0;
      for (const auto& c : cells)
        if (!c.ok) {
          ++failed;
          std::cerr << fmt::format("cell {} replicate {} failed: {}\n", c.index, c.replicate, c.error);
        }
      std::cerr << fmt::format("{} runs, {} failed; wrote {}\n", cells.size(), failed,
                               (base.output_dir / "sweep.csv").string());
      return failed == 0 ? 0 : 2;
    } else if (*wgen) {
      RunConfig cfg = resolve(wg_f);
      cfg.validate();
      cfg = cfg.resolved();
      fs::create_directories(cfg.output_dir);
      const fs::path p = cfg.output_dir / "world.json";
      Json body = to_json(make_world(cfg.world));
      body["provenance"] = {{"version", version_string()}, {"config", to_json(cfg)}};
      write_json_file(p, body);
      std::cerr << fmt::format("wrote {}\n", p.string());
    } else if (*ev) {
      const auto rows = cmd_eval(eval_dir);
      std::cout << kReportHeader << '\n';
      for (const auto& r : rows) std::cout << format_report_row(r) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "petbench: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
