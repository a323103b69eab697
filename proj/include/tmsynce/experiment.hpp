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

#ifndef TMSYNCE_EXPERIMENT_HPP
#define TMSYNCE_EXPERIMENT_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmsynce/diagnostics.hpp"
#include "tmsynce/estimator.hpp"
#include "tmsynce/model.hpp"
#include "tmsynce/sampler.hpp"

namespace tmsynce {

inline constexpr int kArtifactSchemaVersion = 1;

/// One experiment: a coupled run configuration plus estimator settings.
/// Parsed from a JSON file; unknown keys are rejected so typos fail loudly.
struct ExperimentConfig {
  std::string problem;                    // banana-quartic | synthetic-bifidelity
  std::string method = "tm-synce";        // tm-synce | no-map-synce
  std::string label;                      // report row name; defaulted if empty
  std::string fine_map = "analytical";    // analytical | identity | triangular-N
  std::string coarse_map = "analytical";  // same choices
  std::string configuration = "direct";   // direct | deep
  double omega = 0.5;
  long iterations = 100000;
  long burn_in = 30000;
  int retrain_period = 5000;
  int repetitions = 5;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  double reference_cov_scale = 0.0;  // 0 keeps the method's default rule
  AdaptationSettings adaptation;
  double cost_ratio = 0.001;  // coarse/fine cost, estimator reporting
  double eps2 = 1e-4;         // target squared error for the allocation
  long coarse_only_iterations = 0;  // extra coarse-only chain; 0 disables
};

/// Parses and validates a config file. Throws ConfigError with the offending
/// key in the message.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

/// Canonical JSON rendering of a config (sorted keys, defaults filled in).
std::string config_canonical(const ExperimentConfig& c);

/// FNV-1a hash of the canonical rendering, as 16 hex digits. Stamped into
/// every artifact header.
std::string config_hash(const ExperimentConfig& c);

/// The artifact header line shared by all writers.
std::string artifact_header(const ExperimentConfig& c);

struct Problem {
  std::shared_ptr<TargetDensity> fine, coarse;
  Eigen::VectorXd init_fine, init_coarse;
  std::shared_ptr<SyntheticBiFidelityModel> synthetic;  // null for the toy pair
  int dim = 0;
};

Problem make_problem(const ExperimentConfig& c);

/// Builds the per-level maps for one repetition (trainable maps are stateful,
/// so every repetition gets a fresh set).
CoupledMaps make_maps(const ExperimentConfig& c, const Problem& p);

/// Reference proposal covariance: explicit scale override if given, otherwise
/// (2.38^2/d) I for transport-map runs and the fine-posterior Laplace
/// covariance scaled the same way for no-map runs.
Eigen::MatrixXd make_reference_cov(const ExperimentConfig& c, const Problem& p);

struct RepetitionResult {
  CoupledRunResult run;
  ChainDiagnostics diag;
  std::string fine_map_json, coarse_map_json;  // empty when not trainable
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string hash;
  std::vector<RepetitionResult> reps;
  DiagnosticsReport report;
  // Synthetic-problem estimator outputs; empty/absent for the toy pair.
  std::optional<MlmcAllocation> allocation;
  Eigen::VectorXd variance_ratios;
  Eigen::VectorXd mlmc_mean;
  Eigen::VectorXd mlmc_se;  // per-component standard error (ESS-adjusted)
};

ExperimentResult run_experiment(const ExperimentConfig& c, int workers = 1);

/// Writes chain CSVs, diagnostics (CSV+JSON), allocation report, map
/// snapshots and the chain-0 autocorrelation series under out_dir.
void write_artifacts(const ExperimentResult& r, const std::string& out_dir);

struct MergedReport {
  std::vector<DiagnosticsReport> rows;
  std::vector<std::string> run_dirs;  // aligned with rows
  std::vector<std::string> skipped;   // unreadable/mismatched inputs
};

/// Loads diagnostics.json from each run directory; rows matching
/// baseline_label fill the relative columns of the others. Schema-version
/// mismatches are skipped, not merged.
MergedReport merge_reports(const std::vector<std::string>& run_dirs,
                           const std::string& baseline_label);

/// Writes report.csv plus copied autocorrelation / variance-ratio series
/// into out_dir.
void write_report(const MergedReport& merged, const std::string& out_dir);

std::string render_report_table(const std::vector<DiagnosticsReport>& rows);
std::string render_allocation(const MlmcAllocation& a);

/// Deterministic round-trip-safe double formatting for artifacts.
std::string format_double(double v);

}  // namespace tmsynce

#endif  // TMSYNCE_EXPERIMENT_HPP
