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

#ifndef TMSYNCE_DIAGNOSTICS_HPP
#define TMSYNCE_DIAGNOSTICS_HPP

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tmsynce {

/// Biased (divide-by-n) autocovariance normalized by lag 0. Throws on a
/// constant series.
Eigen::VectorXd autocorrelation(const Eigen::VectorXd& series, int max_lag);

struct IatResult {
  double tau;
  int window;
  bool warning;  // set when the self-consistent window exceeds n/4
};

/// Integrated autocorrelation time with self-consistent windowing: the
/// smallest window W with W >= 5 * tau_W. Clamped below at 1.
IatResult iat(const Eigen::VectorXd& series);

struct EssResult {
  double ess;
  double tau;
  bool warning;
};

/// Effective sample size n / tau.
EssResult ess(const Eigen::VectorXd& series);

/// Standard Pearson correlation; throws DomainError on zero variance.
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Per-chain raw metrics feeding the summary report.
struct ChainDiagnostics {
  Eigen::VectorXd rho_per_dim;   // fine/coarse Pearson per dimension
  Eigen::VectorXd tau_per_dim;   // fine-level IAT per dimension
  Eigen::VectorXd ess_per_dim;   // fine-level ESS per dimension
  double wall_seconds = 0.0;
  std::optional<double> sigma2_m;  // map-quality metric; missing for no-map runs
  bool iat_warning = false;
};

/// One comparison-table row: worst value over dimensions per metric, median
/// across repetitions, mean wall time.
struct DiagnosticsReport {
  std::string method;
  double omega = 0.0;
  double rho_min = 0.0;
  double tau_max = 0.0;
  double ess_min = 0.0;
  double wall_seconds = 0.0;
  double ess_per_sec = 0.0;
  std::optional<double> sigma2_m;
  std::optional<double> kl_m;
  std::optional<double> rel_rho_min;
  std::optional<double> rel_ess_per_sec;
  bool iat_warning = false;
};

DiagnosticsReport summarize(const std::vector<ChainDiagnostics>& chains,
                            const std::string& method, double omega);

/// Fills the relative columns of `report` against `baseline` (arithmetic
/// division of the absolute columns).
void apply_baseline(DiagnosticsReport& report, const DiagnosticsReport& baseline);

double median(std::vector<double> values);

}  // namespace tmsynce

#endif  // TMSYNCE_DIAGNOSTICS_HPP
