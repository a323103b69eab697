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

#include "tmsynce/transport.hpp"

#include <cmath>

#include "tmsynce/errors.hpp"

namespace tmsynce {

Eigen::VectorXd AnalyticalBananaMap::forward(const Eigen::VectorXd& x) const {
  const double a = x[0] - shift_;
  Eigen::VectorXd r(2);
  r[0] = a;
  r[1] = x[1] + a * a;
  return r;
}

Eigen::VectorXd AnalyticalBananaMap::inverse(const Eigen::VectorXd& r) const {
  Eigen::VectorXd x(2);
  x[0] = r[0] + shift_;
  x[1] = r[1] - r[0] * r[0];
  return x;
}

Eigen::VectorXd AnalyticalQuarticMap::forward(const Eigen::VectorXd& x) const {
  const double a = x[0] - shift_;
  const double a2 = a * a;
  Eigen::VectorXd r(2);
  r[0] = a;
  r[1] = x[1] + a2 + a2 * a2;
  return r;
}

Eigen::VectorXd AnalyticalQuarticMap::inverse(const Eigen::VectorXd& r) const {
  Eigen::VectorXd x(2);
  const double a2 = r[0] * r[0];
  x[0] = r[0] + shift_;
  x[1] = r[1] - a2 - a2 * a2;
  return x;
}

Eigen::VectorXd AnalyticalQuarticToBananaMap::forward(const Eigen::VectorXd& x) const {
  const double a = x[0] - s2_;
  const double a2 = a * a;
  Eigen::VectorXd y(2);
  y[0] = x[0] + s1_ - s2_;
  y[1] = x[1] + a2 * a2;
  return y;
}

Eigen::VectorXd AnalyticalQuarticToBananaMap::inverse(const Eigen::VectorXd& y) const {
  Eigen::VectorXd x(2);
  x[0] = y[0] - s1_ + s2_;
  const double a = x[0] - s2_;
  const double a2 = a * a;
  x[1] = y[1] - a2 * a2;
  return x;
}

ComposedMap::ComposedMap(std::shared_ptr<TransportMap> outer,
                         std::shared_ptr<TransportMap> inner)
    : outer_(std::move(outer)), inner_(std::move(inner)) {
  if (outer_->dim() != inner_->dim()) {
    throw ConfigError("composed map dimensions mismatch");
  }
}

Eigen::VectorXd ComposedMap::forward(const Eigen::VectorXd& x) const {
  return outer_->forward(inner_->forward(x));
}

Eigen::VectorXd ComposedMap::inverse(const Eigen::VectorXd& r) const {
  return inner_->inverse(outer_->inverse(r));
}

Eigen::VectorXd ComposedMap::inverse_from(const Eigen::VectorXd& r,
                                          const Eigen::VectorXd& guess) const {
  const Eigen::VectorXd mid_guess = inner_->forward(guess);
  const Eigen::VectorXd mid = outer_->inverse_from(r, mid_guess);
  return inner_->inverse_from(mid, guess);
}

double ComposedMap::log_det_jacobian(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd mid = inner_->forward(x);
  return inner_->log_det_jacobian(x) + outer_->log_det_jacobian(mid);
}

double kl_sa_loss(const TransportMap& map, const std::vector<Eigen::VectorXd>& samples,
                  const TargetDensity& reference) {
  if (samples.empty()) throw DomainError("kl_sa_loss: empty sample set");
  double sum = 0.0;
  std::size_t skipped = 0;
  for (const auto& x : samples) {
    const Eigen::VectorXd r = map.forward(x);
    const double term = -(reference.log_pdf(r) + map.log_det_jacobian(x));
    if (std::isfinite(term)) {
      sum += term;
    } else {
      ++skipped;
    }
  }
  if (skipped > samples.size() / 100) {
    throw TrainingError("kl_sa_loss: more than 1% non-finite summands");
  }
  return sum / static_cast<double>(samples.size() - skipped);
}

VarianceDiagnostic variance_diagnostic(const TransportMap& map, const TargetDensity& target,
                                       const std::vector<Eigen::VectorXd>& samples,
                                       const TargetDensity& reference) {
  if (samples.empty()) throw DomainError("variance_diagnostic: empty sample set");
  // Welford over the log density mismatch.
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  for (const auto& x : samples) {
    const Eigen::VectorXd r = map.forward(x);
    const double v =
        target.log_pdf(x) - reference.log_pdf(r) - map.log_det_jacobian(x);
    if (!std::isfinite(v)) continue;
    ++count;
    const double d = v - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (v - mean);
  }
  if (count == 0) throw DomainError("variance_diagnostic: no finite terms");
  const double sigma2 = count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
  return {sigma2, 1.0 - std::exp(-sigma2)};
}

}  // namespace tmsynce
