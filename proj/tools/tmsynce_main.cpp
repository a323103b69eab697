// Copyright 2026 tmsynce contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tmsynce/errors.hpp"
#include "tmsynce/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_override, int workers, bool validate_only) {
  tmsynce::ExperimentConfig config;
  try {
    config = tmsynce::load_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_override.empty()) config.output_dir = out_override;
  } catch (const tmsynce::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return kExitConfig;
  }
  if (validate_only) {
    std::cout << "ok: " << config_path << " (hash " << tmsynce::config_hash(config) << ")\n";
    return kExitOk;
  }
  try {
    const tmsynce::ExperimentResult result = tmsynce::run_experiment(config, workers);
    tmsynce::write_artifacts(result, config.output_dir);
    std::cout << tmsynce::render_report_table({result.report});
    for (const auto& rep : result.reps) {
      for (const auto& event : rep.run.events) std::cerr << "note: " << event << "\n";
    }
    if (result.allocation) std::cout << tmsynce::render_allocation(*result.allocation);
    std::cout << "artifacts written to " << config.output_dir << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& baseline,
               const std::string& out_dir) {
  if (run_dirs.empty()) {
    std::cerr << "report: at least one run directory is required\n";
    return kExitConfig;
  }
  try {
    const tmsynce::MergedReport merged = tmsynce::merge_reports(run_dirs, baseline);
    for (const auto& s : merged.skipped) std::cerr << "skipped: " << s << "\n";
    if (merged.rows.empty()) {
      std::cerr << "report: no readable run artifacts\n";
      return kExitRuntime;
    }
    std::cout << tmsynce::render_report_table(merged.rows);
    if (!out_dir.empty()) {
      tmsynce::write_report(merged, out_dir);
      std::cout << "report written to " << out_dir << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "report failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_allocate(const std::vector<double>& inline_stats, const std::string& stats_path) {
  double v0 = 0, v1 = 0, c0 = 0, c1 = 0, eps2 = 0;
  if (inline_stats.size() == 5) {
    v0 = inline_stats[0];
    v1 = inline_stats[1];
    c0 = inline_stats[2];
    c1 = inline_stats[3];
    eps2 = inline_stats[4];
  } else if (!stats_path.empty()) {
    std::ifstream in(stats_path);
    if (!in) {
      std::cerr << "allocate: cannot open " << stats_path << "\n";
      return kExitConfig;
    }
    try {
      nlohmann::json j;
      in >> j;
      v0 = j.at("v0_trace").get<double>();
      v1 = j.at("v1_trace").get<double>();
      c0 = j.at("c0").get<double>();
      c1 = j.at("c1").get<double>();
      eps2 = j.at("eps2").get<double>();
    } catch (const std::exception& e) {
      std::cerr << "allocate: bad stats file: " << e.what() << "\n";
      return kExitConfig;
    }
  } else {
    std::cerr << "allocate: pass V0 V1 C0 C1 eps2 inline or --stats FILE\n";
    return kExitConfig;
  }
  try {
    const tmsynce::MlmcAllocation a = tmsynce::optimal_allocation(v0, v1, c0, c1, eps2);
    std::cout << tmsynce::render_allocation(a);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "allocate: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tmsynce: transport-map synchronized coupling for bi-fidelity MCMC"};
  app.require_subcommand(1);

  std::string config_path, out_dir, baseline, stats_path;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::vector<std::string> run_dirs;
  std::vector<double> inline_stats;

  CLI::App* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed, "master seed override");
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--workers", workers, "concurrent repetitions")->check(CLI::PositiveNumber);

  CLI::App* validate = app.add_subcommand("validate-config", "parse and validate a config");
  validate->add_option("--config", config_path, "experiment config (JSON)")->required();

  CLI::App* report = app.add_subcommand("report", "merge run diagnostics into one table");
  report->add_option("dirs", run_dirs, "run directories");
  report->add_option("--baseline", baseline, "method label used for relative columns");
  report->add_option("--out", out_dir, "directory for report.csv and data series");

  CLI::App* allocate = app.add_subcommand("allocate", "optimal two-level sample allocation");
  allocate->add_option("values", inline_stats, "inline V0 V1 C0 C1 eps2")->expected(0, 5);
  allocate->add_option("--stats", stats_path, "JSON stats file (allocation.json)");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, seed, out_dir, workers, false);
  if (validate->parsed()) return cmd_run(config_path, seed, out_dir, workers, true);
  if (report->parsed()) return cmd_report(run_dirs, baseline, out_dir);
  if (allocate->parsed()) return cmd_allocate(inline_stats, stats_path);
  return kExitConfig;
}
