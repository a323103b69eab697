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

#include "tmsynce/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "tmsynce/errors.hpp"

namespace tmsynce {

namespace {

// Mean-centered autocovariance at a single lag, divide-by-n normalization.
double autocov(const Eigen::VectorXd& centered, int lag) {
  const auto n = centered.size();
  return centered.head(n - lag).dot(centered.tail(n - lag)) / static_cast<double>(n);
}

}  // namespace

Eigen::VectorXd autocorrelation(const Eigen::VectorXd& series, int max_lag) {
  const auto n = series.size();
  if (n <= max_lag) throw DomainError("autocorrelation: series shorter than max_lag");
  const Eigen::VectorXd centered = series.array() - series.mean();
  const double c0 = autocov(centered, 0);
  if (c0 <= 0.0) throw DomainError("autocorrelation: zero variance series");
  Eigen::VectorXd r(max_lag + 1);
  for (int k = 0; k <= max_lag; ++k) r[k] = autocov(centered, k) / c0;
  return r;
}

IatResult iat(const Eigen::VectorXd& series) {
  const auto n = series.size();
  if (n < 100) throw DomainError("iat: series too short");
  const Eigen::VectorXd centered = series.array() - series.mean();
  const double c0 = autocov(centered, 0);
  if (c0 <= 0.0) throw DomainError("iat: zero variance series");

  const int hard_cap = static_cast<int>(n / 4);
  double tau = 1.0;
  double partial = 0.0;
  for (int w = 1; w <= hard_cap; ++w) {
    partial += autocov(centered, w) / c0;
    tau = std::max(1.0, 1.0 + 2.0 * partial);
    if (w >= 5.0 * tau) return {tau, w, false};
  }
  return {std::max(1.0, tau), hard_cap, true};
}

EssResult ess(const Eigen::VectorXd& series) {
  const IatResult r = iat(series);
  return {static_cast<double>(series.size()) / r.tau, r.tau, r.warning};
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("pearson: need >= 2 pairs");
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (denom <= 0.0) throw DomainError("pearson: zero variance series");
  return ca.dot(cb) / denom;
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

DiagnosticsReport summarize(const std::vector<ChainDiagnostics>& chains,
                            const std::string& method, double omega) {
  if (chains.empty()) throw DomainError("summarize: no chains");
  std::vector<double> rho_min, tau_max, ess_min, sigma2;
  double wall_sum = 0.0;
  bool warn = false;
  for (const auto& c : chains) {
    rho_min.push_back(c.rho_per_dim.minCoeff());
    tau_max.push_back(c.tau_per_dim.maxCoeff());
    ess_min.push_back(c.ess_per_dim.minCoeff());
    wall_sum += c.wall_seconds;
    if (c.sigma2_m) sigma2.push_back(*c.sigma2_m);
    warn = warn || c.iat_warning;
  }
  DiagnosticsReport rep;
  rep.method = method;
  rep.omega = omega;
  rep.rho_min = median(rho_min);
  rep.tau_max = median(tau_max);
  rep.ess_min = median(ess_min);
  rep.wall_seconds = wall_sum / static_cast<double>(chains.size());
  rep.ess_per_sec = rep.wall_seconds > 0.0 ? rep.ess_min / rep.wall_seconds : 0.0;
  if (!sigma2.empty()) {
    rep.sigma2_m = median(sigma2);
    rep.kl_m = 1.0 - std::exp(-*rep.sigma2_m);
  }
  rep.iat_warning = warn;
  return rep;
}

void apply_baseline(DiagnosticsReport& report, const DiagnosticsReport& baseline) {
  if (baseline.rho_min != 0.0) report.rel_rho_min = report.rho_min / baseline.rho_min;
  if (baseline.ess_per_sec != 0.0) {
    report.rel_ess_per_sec = report.ess_per_sec / baseline.ess_per_sec;
  }
}

}  // namespace tmsynce
