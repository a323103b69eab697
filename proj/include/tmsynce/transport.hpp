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

#ifndef TMSYNCE_TRANSPORT_HPP
#define TMSYNCE_TRANSPORT_HPP

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "tmsynce/model.hpp"

namespace tmsynce {

/// Invertible map between a target space and a reference space.
///
/// Contracts: inverse(forward(x)) == x to 1e-8 in max norm, and
/// log_det_jacobian matches the finite-difference Jacobian log-determinant
/// to 1e-5 relative error.
class TransportMap {
 public:
  virtual ~TransportMap() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd forward(const Eigen::VectorXd& x) const = 0;
  /// May throw InversionError; callers treat that as a proposal rejection.
  virtual Eigen::VectorXd inverse(const Eigen::VectorXd& r) const = 0;
  virtual double log_det_jacobian(const Eigen::VectorXd& x) const = 0;
  /// Inverse warm-started from a nearby target-space point (chain state).
  virtual Eigen::VectorXd inverse_from(const Eigen::VectorXd& r,
                                       const Eigen::VectorXd& /*guess*/) const {
    return inverse(r);
  }
};

class IdentityMap : public TransportMap {
 public:
  explicit IdentityMap(int d) : dim_(d) {}
  int dim() const override { return dim_; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override { return x; }
  Eigen::VectorXd inverse(const Eigen::VectorXd& r) const override { return r; }
  double log_det_jacobian(const Eigen::VectorXd&) const override { return 0.0; }

 private:
  int dim_;
};

/// Exact banana-to-reference map: (x1 - s, x2 + (x1 - s)^2).
/// Unit-diagonal triangular Jacobian, so log-det is identically zero.
class AnalyticalBananaMap : public TransportMap {
 public:
  explicit AnalyticalBananaMap(double shift = -4.0) : shift_(shift) {}
  int dim() const override { return 2; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd inverse(const Eigen::VectorXd& r) const override;
  double log_det_jacobian(const Eigen::VectorXd&) const override { return 0.0; }

 private:
  double shift_;
};

/// Exact quartic-to-reference map: (x1 - s, x2 + (x1-s)^2 + (x1-s)^4).
class AnalyticalQuarticMap : public TransportMap {
 public:
  explicit AnalyticalQuarticMap(double shift = 4.0) : shift_(shift) {}
  int dim() const override { return 2; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd inverse(const Eigen::VectorXd& r) const override;
  double log_det_jacobian(const Eigen::VectorXd&) const override { return 0.0; }

 private:
  double shift_;
};

/// Exact quartic-to-banana map for the deep configuration:
/// (x1 + s1 - s2, x2 + (x1 - s2)^4).
class AnalyticalQuarticToBananaMap : public TransportMap {
 public:
  AnalyticalQuarticToBananaMap(double banana_shift = -4.0, double quartic_shift = 4.0)
      : s1_(banana_shift), s2_(quartic_shift) {}
  int dim() const override { return 2; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd inverse(const Eigen::VectorXd& r) const override;
  double log_det_jacobian(const Eigen::VectorXd&) const override { return 0.0; }

 private:
  double s1_, s2_;
};

/// outer(inner(x)). Used for the deep configuration T_{coarse} o T_{fine}.
class ComposedMap : public TransportMap {
 public:
  ComposedMap(std::shared_ptr<TransportMap> outer, std::shared_ptr<TransportMap> inner);
  int dim() const override { return inner_->dim(); }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd inverse(const Eigen::VectorXd& r) const override;
  double log_det_jacobian(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd inverse_from(const Eigen::VectorXd& r,
                               const Eigen::VectorXd& guess) const override;

 private:
  std::shared_ptr<TransportMap> outer_, inner_;
};

/// Sample-average KL loss of a map against a reference density:
///   (1/|S|) sum_i -[ log pi_ref(T(x_i)) + log|det J_T(x_i)| ].
/// Non-finite summands are excluded and counted; more than 1% of them is a
/// TrainingError.
double kl_sa_loss(const TransportMap& map, const std::vector<Eigen::VectorXd>& samples,
                  const TargetDensity& reference);

struct VarianceDiagnostic {
  double sigma2;  // variance of the log density mismatch
  double kl_m;    // 1 - exp(-sigma2)
};

/// Map-quality metric: variance over samples of
/// log pi(x) - log pi_ref(T(x)) - log|det J_T(x)|.
VarianceDiagnostic variance_diagnostic(const TransportMap& map, const TargetDensity& target,
                                       const std::vector<Eigen::VectorXd>& samples,
                                       const TargetDensity& reference);

}  // namespace tmsynce

#endif  // TMSYNCE_TRANSPORT_HPP
