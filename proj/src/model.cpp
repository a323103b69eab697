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

#include "tmsynce/model.hpp"

#include <cmath>

#include "tmsynce/errors.hpp"

namespace tmsynce {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

Eigen::VectorXd TargetDensity::log_pdf_grad(const Eigen::VectorXd& x) const {
  const double h = 1e-6;
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (log_pdf(xp) - log_pdf(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

double BananaDensity::log_pdf(const Eigen::VectorXd& x) const {
  if (!x.allFinite()) throw DomainError("banana log_pdf: non-finite input");
  const double a = x[0] - shift_;
  const double b = x[1] + a * a;
  return -0.5 * (a * a + b * b);
}

Eigen::VectorXd BananaDensity::log_pdf_grad(const Eigen::VectorXd& x) const {
  const double a = x[0] - shift_;
  const double b = x[1] + a * a;
  Eigen::VectorXd g(2);
  g[0] = -a - 2.0 * a * b;
  g[1] = -b;
  return g;
}

double QuarticDensity::log_pdf(const Eigen::VectorXd& x) const {
  if (!x.allFinite()) throw DomainError("quartic log_pdf: non-finite input");
  const double a = x[0] - shift_;
  const double a2 = a * a;
  const double b = x[1] + a2 + a2 * a2;
  return -0.5 * (a2 + b * b);
}

Eigen::VectorXd QuarticDensity::log_pdf_grad(const Eigen::VectorXd& x) const {
  const double a = x[0] - shift_;
  const double a2 = a * a;
  const double b = x[1] + a2 + a2 * a2;
  Eigen::VectorXd g(2);
  g[0] = -a - b * (2.0 * a + 4.0 * a2 * a);
  g[1] = -b;
  return g;
}

double StandardNormalDensity::log_pdf(const Eigen::VectorXd& x) const {
  return -0.5 * dim_ * kLog2Pi - 0.5 * x.squaredNorm();
}

Eigen::VectorXd StandardNormalDensity::log_pdf_grad(const Eigen::VectorXd& x) const {
  return -x;
}

GaussianPosterior::GaussianPosterior(ForwardModel forward, Eigen::VectorXd data,
                                     Eigen::MatrixXd noise_covariance,
                                     std::vector<std::pair<double, double>> prior_box)
    : forward_(std::move(forward)),
      data_(std::move(data)),
      prior_box_(std::move(prior_box)) {
  if (noise_covariance.rows() != data_.size() || noise_covariance.cols() != data_.size()) {
    throw ConfigError("noise covariance dimension does not match data");
  }
  if (!noise_covariance.isApprox(noise_covariance.transpose(), 1e-12)) {
    throw ConfigError("noise covariance is not symmetric");
  }
  noise_llt_.compute(noise_covariance);
  if (noise_llt_.info() != Eigen::Success) {
    throw ConfigError("noise covariance is not positive definite");
  }
  for (const auto& [lo, hi] : prior_box_) {
    if (!(lo < hi)) throw ConfigError("prior box bound must satisfy lower < upper");
  }
}

bool GaussianPosterior::in_box(const Eigen::VectorXd& theta) const {
  for (int i = 0; i < theta.size(); ++i) {
    if (theta[i] < prior_box_[i].first || theta[i] > prior_box_[i].second) return false;
  }
  return true;
}

double GaussianPosterior::log_pdf(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim()) {
    throw ConfigError("parameter dimension does not match prior box");
  }
  if (!theta.allFinite()) throw DomainError("posterior log_pdf: non-finite input");
  if (!in_box(theta)) return -kInf;
  const Eigen::VectorXd y = forward_(theta);
  // Solver-like failures (NaN/inf outputs) map to automatic rejection.
  if (!y.allFinite()) return -kInf;
  const Eigen::VectorXd resid = data_ - y;
  return -0.5 * resid.dot(noise_llt_.solve(resid));
}

SyntheticBiFidelityModel::SyntheticBiFidelityModel(double target_correlation,
                                                   double cost_ratio)
    : box_{{0.205, 0.615}, {0.06775, 0.20325}, {0.33335, 1.0005}, {3.55, 10.65}},
      cost_ratio_(cost_ratio) {
  nominal_ = Eigen::VectorXd(4);
  nominal_ << 0.41, 0.1355, 0.6667, 7.1;

  // Calibrate the perturbation scale against fixed quasi-random box samples
  // so corr(fine_j, coarse_j) under the uniform box law hits the target.
  const int n = 4096;
  RngStream rng(0x5eedu);
  Eigen::MatrixXd f1(n, 6), g(n, 6);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd t(4);
    for (int k = 0; k < 4; ++k) t[k] = 2.0 * rng.uniform() - 1.0;
    f1.row(i) = features(t);
    g.row(i) = perturbation(t);
  }
  const Eigen::RowVectorXd f1_mean = f1.colwise().mean();
  const Eigen::RowVectorXd g_mean = g.colwise().mean();
  f1.rowwise() -= f1_mean;
  g.rowwise() -= g_mean;
  delta_ = Eigen::VectorXd(6);
  resid_coeff_ = Eigen::VectorXd(6);
  const double k = std::sqrt(1.0 / (target_correlation * target_correlation) - 1.0);
  for (int j = 0; j < 6; ++j) {
    const double var_f = f1.col(j).squaredNorm() / n;
    // Residualize the perturbation against the fine output so the
    // correlation formula is exact under the sampling law.
    resid_coeff_[j] = f1.col(j).dot(g.col(j)) / f1.col(j).squaredNorm();
    const Eigen::VectorXd r = g.col(j) - resid_coeff_[j] * f1.col(j);
    const double var_r = r.squaredNorm() / n;
    delta_[j] = k * std::sqrt(var_f / var_r);
  }
}

Eigen::VectorXd SyntheticBiFidelityModel::normalized(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd t(4);
  for (int i = 0; i < 4; ++i) {
    const auto& [lo, hi] = box_[i];
    t[i] = 2.0 * (theta[i] - lo) / (hi - lo) - 1.0;
  }
  return t;
}

Eigen::VectorXd SyntheticBiFidelityModel::features(const Eigen::VectorXd& t) const {
  Eigen::VectorXd y(6);
  y[0] = t[0] + 0.5 * t[1] * t[1];
  y[1] = t[1] + 0.4 * t[2] * t[3];
  y[2] = std::sin(t[0] + t[2]);
  y[3] = t[3] + 0.3 * std::exp(0.5 * t[1]);
  y[4] = 0.6 * t[0] * t[1] + t[2];
  y[5] = 0.8 * t[1] + std::cos(t[3]) + 0.4 * t[0] * t[0];
  return y;
}

Eigen::VectorXd SyntheticBiFidelityModel::perturbation(const Eigen::VectorXd& t) const {
  Eigen::VectorXd y(6);
  y[0] = std::cos(2.0 * t[1]);
  y[1] = std::sin(2.0 * t[0]);
  y[2] = t[1] * t[1] - t[3];
  y[3] = std::cos(t[2] + t[3]);
  y[4] = std::sin(2.0 * t[3]);
  y[5] = t[0] * t[2];
  return y;
}

Eigen::VectorXd SyntheticBiFidelityModel::fine(const Eigen::VectorXd& theta) const {
  return features(normalized(theta));
}

Eigen::VectorXd SyntheticBiFidelityModel::coarse(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd t = normalized(theta);
  const Eigen::VectorXd f = features(t);
  const Eigen::VectorXd g = perturbation(t);
  return f + delta_.cwiseProduct(g - resid_coeff_.cwiseProduct(f));
}

std::shared_ptr<GaussianPosterior> SyntheticBiFidelityModel::fine_posterior() const {
  const Eigen::VectorXd data = fine(nominal_);
  const Eigen::MatrixXd cov = 0.001 * Eigen::MatrixXd::Identity(6, 6);
  auto model = *this;
  return std::make_shared<GaussianPosterior>(
      [model](const Eigen::VectorXd& th) { return model.fine(th); }, data, cov, box_);
}

std::shared_ptr<GaussianPosterior> SyntheticBiFidelityModel::coarse_posterior() const {
  const Eigen::VectorXd data = fine(nominal_);
  const Eigen::MatrixXd cov = 0.001 * Eigen::MatrixXd::Identity(6, 6);
  auto model = *this;
  return std::make_shared<GaussianPosterior>(
      [model](const Eigen::VectorXd& th) { return model.coarse(th); }, data, cov, box_);
}

std::vector<Eigen::VectorXd> sample_reference(int n, int d, RngStream& rng) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(rng.normal_vector(d));
  return out;
}

std::vector<Eigen::VectorXd> sample_banana(int n, RngStream& rng, double shift) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = rng.normal_vector(2);
    Eigen::VectorXd x(2);
    x[0] = z[0] + shift;
    const double a = x[0] - shift;
    x[1] = z[1] - a * a;
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Eigen::VectorXd> sample_quartic(int n, RngStream& rng, double shift) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = rng.normal_vector(2);
    Eigen::VectorXd x(2);
    x[0] = z[0] + shift;
    const double a = x[0] - shift;
    const double a2 = a * a;
    x[1] = z[1] - a2 - a2 * a2;
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace tmsynce
