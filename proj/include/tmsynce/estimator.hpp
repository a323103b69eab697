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

#ifndef TMSYNCE_ESTIMATOR_HPP
#define TMSYNCE_ESTIMATOR_HPP

#include <optional>

#include <Eigen/Dense>

namespace tmsynce {

/// Sample mean of row-wise Q values (n x m).
Eigen::VectorXd mc_mean(const Eigen::MatrixXd& q);

/// Variance of the MC mean estimator: sample variance (n-1 divisor) / n.
/// Requires n >= 2.
Eigen::VectorXd mc_estimator_variance(const Eigen::MatrixXd& q);

/// Two-level telescoping estimate: coarse-only mean plus mean of
/// (fine - coarse) over coupled pairs.
Eigen::VectorXd mlmc_estimate(const Eigen::MatrixXd& coarse_only,
                              const Eigen::MatrixXd& fine_pairs,
                              const Eigen::MatrixXd& coarse_pairs);

struct CoupledStats {
  Eigen::VectorXd rho;       // per-component Pearson; NaN where undefined
  Eigen::VectorXd v0;        // per-component Var[Q0]
  Eigen::VectorXd v1;        // per-component Var[Q1 - Q0]
  Eigen::VectorXd var_fine;  // per-component Var[Q1]
  double v0_trace;
  double v1_trace;
};

/// Per-component correlation and coupled-difference variance over paired
/// Q values; traces are sums over components.
CoupledStats coupled_statistics(const Eigen::MatrixXd& fine_pairs,
                                const Eigen::MatrixXd& coarse_pairs);

struct MlmcAllocation {
  double n0_raw, n1_raw;   // closed-form real-valued sample counts
  long n0, n1;             // rounded up for execution
  double total_cost;       // C* at the raw counts
  double optimal_variance; // trace variance at the raw counts
  std::optional<double> n_eq;  // equivalent-cost fine-only count; missing if c1 <= c0
  double v0_trace, v1_trace, c0, c1, eps2;
  // Classical two-level allocation (sum of sqrt(V_k C_k) form), reported as a
  // labeled cross-check next to the primary closed form.
  double classical_n0, classical_n1, classical_cost;
};

/// Closed-form optimal sample allocation for the bi-fidelity estimator at
/// target squared error eps2.
MlmcAllocation optimal_allocation(double v0_trace, double v1_trace, double c0, double c1,
                                  double eps2);

/// Per-component ratio of the equivalent-cost fine-only MC variance to the
/// optimally allocated two-level variance. Values above 1 mean the coupled
/// estimator wins. Undefined (NaN) where the component variance vanishes.
Eigen::VectorXd variance_ratio(const CoupledStats& stats, double c0, double c1);

/// Same ratio evaluated with trace quantities as a scalar summary.
double variance_ratio_scalar(const CoupledStats& stats, double c0, double c1);

}  // namespace tmsynce

#endif  // TMSYNCE_ESTIMATOR_HPP
