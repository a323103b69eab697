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

#ifndef TMSYNCE_MODEL_HPP
#define TMSYNCE_MODEL_HPP

#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tmsynce/rng.hpp"

namespace tmsynce {

/// Evaluable unnormalized log-density. Evaluation is pure; outside the
/// support the value is -inf.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  virtual double log_pdf(const Eigen::VectorXd& x) const = 0;
  /// Gradient of log_pdf. Default is central finite differences; analytic
  /// densities override.
  virtual Eigen::VectorXd log_pdf_grad(const Eigen::VectorXd& x) const;
};

/// 2-D banana-shaped density with mode at (shift, 0).
class BananaDensity : public TargetDensity {
 public:
  explicit BananaDensity(double shift = -4.0) : shift_(shift) {}
  int dim() const override { return 2; }
  double log_pdf(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd log_pdf_grad(const Eigen::VectorXd& x) const override;
  double shift() const { return shift_; }

 private:
  double shift_;
};

/// 2-D quartic-warped density with mode at (shift, 0).
class QuarticDensity : public TargetDensity {
 public:
  explicit QuarticDensity(double shift = 4.0) : shift_(shift) {}
  int dim() const override { return 2; }
  double log_pdf(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd log_pdf_grad(const Eigen::VectorXd& x) const override;
  double shift() const { return shift_; }

 private:
  double shift_;
};

/// Standard multivariate Gaussian, *normalized* (used as the map-training
/// reference so KL losses have absolute meaning).
class StandardNormalDensity : public TargetDensity {
 public:
  explicit StandardNormalDensity(int d) : dim_(d) {}
  int dim() const override { return dim_; }
  double log_pdf(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd log_pdf_grad(const Eigen::VectorXd& x) const override;

 private:
  int dim_;
};

/// Gaussian-likelihood posterior over a pluggable forward model with a hard
/// box prior. log_pdf drops all normalizing constants.
class GaussianPosterior : public TargetDensity {
 public:
  using ForwardModel = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  /// Throws ConfigError if the noise covariance has no SPD factorization or
  /// the box dimension mismatches data expectations at evaluation time.
  GaussianPosterior(ForwardModel forward, Eigen::VectorXd data,
                    Eigen::MatrixXd noise_covariance,
                    std::vector<std::pair<double, double>> prior_box);

  int dim() const override { return static_cast<int>(prior_box_.size()); }
  double log_pdf(const Eigen::VectorXd& theta) const override;
  bool in_box(const Eigen::VectorXd& theta) const;
  const std::vector<std::pair<double, double>>& prior_box() const { return prior_box_; }

 private:
  ForwardModel forward_;
  Eigen::VectorXd data_;
  Eigen::LLT<Eigen::MatrixXd> noise_llt_;
  std::vector<std::pair<double, double>> prior_box_;
};

/// Synthetic coarse/fine forward-model pair over the 4-parameter demo box.
/// The coarse model is the fine model plus a fixed smooth perturbation,
/// scaled at construction so the per-output correlation under a uniform
/// box distribution is close to the requested value.
class SyntheticBiFidelityModel {
 public:
  explicit SyntheticBiFidelityModel(double target_correlation = 0.9,
                                    double cost_ratio = 0.001);

  Eigen::VectorXd fine(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd coarse(const Eigen::VectorXd& theta) const;

  int input_dim() const { return 4; }
  int output_dim() const { return 6; }
  double cost_ratio() const { return cost_ratio_; }
  const std::vector<std::pair<double, double>>& prior_box() const { return box_; }
  const Eigen::VectorXd& nominal() const { return nominal_; }

  /// Posteriors built from data generated at the nominal parameters with
  /// diagonal noise covariance 0.001*I.
  std::shared_ptr<GaussianPosterior> fine_posterior() const;
  std::shared_ptr<GaussianPosterior> coarse_posterior() const;

 private:
  Eigen::VectorXd normalized(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd features(const Eigen::VectorXd& t) const;
  Eigen::VectorXd perturbation(const Eigen::VectorXd& t) const;

  std::vector<std::pair<double, double>> box_;
  Eigen::VectorXd nominal_;
  Eigen::VectorXd delta_;        // per-output perturbation scale
  Eigen::VectorXd resid_coeff_;  // residualization of the perturbation vs fine output
  double cost_ratio_;
};

/// i.i.d. standard-normal vectors, reproducible from the stream state.
std::vector<Eigen::VectorXd> sample_reference(int n, int d, RngStream& rng);

/// Exact samplers via the inverse analytical triangular transforms.
std::vector<Eigen::VectorXd> sample_banana(int n, RngStream& rng, double shift = -4.0);
std::vector<Eigen::VectorXd> sample_quartic(int n, RngStream& rng, double shift = 4.0);

}  // namespace tmsynce

#endif  // TMSYNCE_MODEL_HPP
