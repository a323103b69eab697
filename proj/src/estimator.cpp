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

#include "tmsynce/estimator.hpp"

#include <cmath>
#include <limits>

#include "tmsynce/errors.hpp"

namespace tmsynce {

namespace {
Eigen::VectorXd column_variance(const Eigen::MatrixXd& q) {
  const auto n = q.rows();
  const Eigen::RowVectorXd mean = q.colwise().mean();
  return ((q.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(n - 1))
      .transpose();
}
}  // namespace

Eigen::VectorXd mc_mean(const Eigen::MatrixXd& q) {
  if (q.rows() < 1) throw DomainError("mc_mean: empty sample set");
  return q.colwise().mean().transpose();
}

Eigen::VectorXd mc_estimator_variance(const Eigen::MatrixXd& q) {
  if (q.rows() < 2) throw DomainError("mc_estimator_variance: need at least 2 samples");
  return column_variance(q) / static_cast<double>(q.rows());
}

Eigen::VectorXd mlmc_estimate(const Eigen::MatrixXd& coarse_only,
                              const Eigen::MatrixXd& fine_pairs,
                              const Eigen::MatrixXd& coarse_pairs) {
  if (coarse_only.rows() < 1 || fine_pairs.rows() < 1) {
    throw DomainError("mlmc_estimate: empty sample set");
  }
  if (fine_pairs.rows() != coarse_pairs.rows() || fine_pairs.cols() != coarse_pairs.cols()) {
    throw DomainError("mlmc_estimate: coupled pair shapes mismatch");
  }
  return mc_mean(coarse_only) + mc_mean(fine_pairs - coarse_pairs);
}

CoupledStats coupled_statistics(const Eigen::MatrixXd& fine_pairs,
                                const Eigen::MatrixXd& coarse_pairs) {
  if (fine_pairs.rows() < 2) throw DomainError("coupled_statistics: need >= 2 pairs");
  if (fine_pairs.rows() != coarse_pairs.rows() || fine_pairs.cols() != coarse_pairs.cols()) {
    throw DomainError("coupled_statistics: shapes mismatch");
  }
  const auto n = fine_pairs.rows();
  const int m = static_cast<int>(fine_pairs.cols());
  CoupledStats s;
  s.v0 = column_variance(coarse_pairs);
  s.var_fine = column_variance(fine_pairs);
  s.v1 = column_variance(fine_pairs - coarse_pairs);
  s.rho = Eigen::VectorXd(m);
  const Eigen::RowVectorXd mf = fine_pairs.colwise().mean();
  const Eigen::RowVectorXd mc = coarse_pairs.colwise().mean();
  for (int j = 0; j < m; ++j) {
    const double cov = (fine_pairs.col(j).array() - mf[j])
                           .cwiseProduct(coarse_pairs.col(j).array() - mc[j])
                           .sum() /
                       static_cast<double>(n - 1);
    const double denom = std::sqrt(s.var_fine[j] * s.v0[j]);
    s.rho[j] = denom > 0.0 ? cov / denom : std::numeric_limits<double>::quiet_NaN();
  }
  s.v0_trace = s.v0.sum();
  s.v1_trace = s.v1.sum();
  return s;
}

MlmcAllocation optimal_allocation(double v0_trace, double v1_trace, double c0, double c1,
                                  double eps2) {
  if (!(v0_trace > 0.0) || !(v1_trace > 0.0) || !(c0 > 0.0) || !(c1 > 0.0) || !(eps2 > 0.0)) {
    throw DomainError("optimal_allocation: all inputs must be positive");
  }
  MlmcAllocation a{};
  a.v0_trace = v0_trace;
  a.v1_trace = v1_trace;
  a.c0 = c0;
  a.c1 = c1;
  a.eps2 = eps2;

  const double root = std::sqrt(v0_trace * c0 + v1_trace * c1);
  a.n0_raw = 2.0 / eps2 * std::sqrt(v0_trace / c0) * root;
  a.n1_raw = 2.0 / eps2 * std::sqrt(v1_trace / c1) * root;
  a.n0 = static_cast<long>(std::ceil(a.n0_raw));
  a.n1 = static_cast<long>(std::ceil(a.n1_raw));
  a.total_cost = 2.0 / eps2 * root * (std::sqrt(v0_trace * c0) + std::sqrt(v1_trace * c1));
  a.optimal_variance = v0_trace / a.n0_raw + v1_trace / a.n1_raw;

  if (c1 > c0) {
    a.n_eq = a.total_cost / (c1 - c0);
  }

  const double sum_sqrt = std::sqrt(v0_trace * c0) + std::sqrt(v1_trace * c1);
  a.classical_n0 = 2.0 / eps2 * std::sqrt(v0_trace / c0) * sum_sqrt;
  a.classical_n1 = 2.0 / eps2 * std::sqrt(v1_trace / c1) * sum_sqrt;
  a.classical_cost = a.classical_n0 * c0 + a.classical_n1 * c1;
  return a;
}

Eigen::VectorXd variance_ratio(const CoupledStats& stats, double c0, double c1) {
  const int m = static_cast<int>(stats.v0.size());
  Eigen::VectorXd ratio(m);
  const double sum_sqrt =
      std::sqrt(stats.v0_trace * c0) + std::sqrt(stats.v1_trace * c1);
  for (int j = 0; j < m; ++j) {
    const double denom = sum_sqrt * (stats.v0[j] * std::sqrt(c0 / stats.v0_trace) +
                                     stats.v1[j] * std::sqrt(c1 / stats.v1_trace));
    ratio[j] = denom > 0.0 ? stats.var_fine[j] * (c1 - c0) / denom
                           : std::numeric_limits<double>::quiet_NaN();
  }
  return ratio;
}

double variance_ratio_scalar(const CoupledStats& stats, double c0, double c1) {
  const double sum_sqrt =
      std::sqrt(stats.v0_trace * c0) + std::sqrt(stats.v1_trace * c1);
  const double denom = sum_sqrt * (stats.v0_trace * std::sqrt(c0 / stats.v0_trace) +
                                   stats.v1_trace * std::sqrt(c1 / stats.v1_trace));
  return stats.var_fine.sum() * (c1 - c0) / denom;
}

}  // namespace tmsynce
