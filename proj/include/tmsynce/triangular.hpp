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

#ifndef TMSYNCE_TRIANGULAR_HPP
#define TMSYNCE_TRIANGULAR_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmsynce/transport.hpp"

namespace tmsynce {

/// Total-order multi-index basis of probabilists' Hermite polynomial products.
class HermiteBasis {
 public:
  HermiteBasis() = default;
  HermiteBasis(int nvars, int total_order);

  int nvars() const { return nvars_; }
  int size() const { return static_cast<int>(indices_.size()); }
  const std::vector<std::vector<int>>& indices() const { return indices_; }

  /// Evaluates all basis terms at x (x has nvars entries); out has size() entries.
  void eval(const double* x, double* out) const;

 private:
  int nvars_ = 0;
  int max_degree_ = 0;
  std::vector<std::vector<int>> indices_;
};

/// Monotone lower-triangular map (integrated-exponential form):
///   T_k(x_1..x_k) = p_k(x_1..x_{k-1})
///                 + int_0^{x_k} exp( q_k(x_1..x_{k-1}, t) ) dt,
/// with polynomial p_k, q_k and the integral evaluated by fixed
/// Gauss--Legendre quadrature rescaled to [0, x_k]. The exponential
/// integrand keeps the diagonal partial strictly positive, so each component
/// is strictly increasing in its last argument.
class MonotoneTriangularMap : public TransportMap {
 public:
  /// order: total order of the off-diagonal polynomials p_k.
  /// diag_order: total order of the integrand polynomials q_k.
  MonotoneTriangularMap(int dim, int order, int diag_order = 1, int quad_points = 32,
                        double eps_mono = 1e-6);

  int dim() const override { return dim_; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd inverse(const Eigen::VectorXd& r) const override;
  double log_det_jacobian(const Eigen::VectorXd& x) const override;

  /// Component-by-component inverse warm-started from a previous point
  /// (typically the current chain state).
  Eigen::VectorXd inverse_from(const Eigen::VectorXd& r,
                               const Eigen::VectorXd& guess) const override;

  /// Per-dimension affine input normalization z = (x - shift) / scale applied
  /// before the polynomial bases. Keeps basis arguments O(1) so training stays
  /// well conditioned; defaults to the identity transform.
  void set_normalization(const Eigen::VectorXd& shift, const Eigen::VectorXd& scale);
  const Eigen::VectorXd& shift() const { return shift_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;

  int order() const { return order_; }
  int diag_order() const { return diag_order_; }
  int num_parameters() const { return static_cast<int>(phi_.size()); }
  const Eigen::VectorXd& parameters() const { return phi_; }
  void set_parameters(const Eigen::VectorXd& phi);

  /// JSON-style record with basis multi-indices, coefficients and quadrature
  /// order; round-trips through from_json for warm starts across levels.
  std::string to_json() const;
  static MonotoneTriangularMap from_json(const std::string& text);

  /// Single-component evaluation given the preceding coordinates; exposed for
  /// the loss kernels and tests.
  double component(int k, const Eigen::VectorXd& x) const;
  double diag_partial(int k, const Eigen::VectorXd& x) const;

  const HermiteBasis& off_basis(int k) const { return off_[k]; }
  const HermiteBasis& diag_basis(int k) const { return diag_[k]; }
  int off_offset(int k) const { return off_offset_[k]; }
  int diag_offset(int k) const { return diag_offset_[k]; }
  int quad_points() const { return quad_points_; }
  double eps_mono() const { return eps_; }
  const Eigen::VectorXd& quad_nodes() const { return nodes_; }
  const Eigen::VectorXd& quad_weights() const { return weights_; }

 private:
  double component_z(int k, const Eigen::VectorXd& z) const;
  double diag_value_z(int k, const Eigen::VectorXd& z) const;
  double solve_component(int k, double target, double guess,
                         const Eigen::VectorXd& z_prev) const;

  int dim_, order_, diag_order_, quad_points_;
  double eps_;
  Eigen::VectorXd shift_, scale_;
  std::vector<HermiteBasis> off_, diag_;
  std::vector<int> off_offset_, diag_offset_;
  Eigen::VectorXd phi_;
  Eigen::VectorXd nodes_, weights_;  // Gauss--Legendre on [0,1]
};

struct LossResult {
  double loss;
  Eigen::VectorXd grad;
  std::size_t skipped;  // non-finite summands excluded
};

/// KL sample-average loss and analytic coefficient gradient for a monotone
/// triangular map. `parallel` selects the OpenMP kernel; the serial kernel is
/// the reference implementation and both must agree to rounding order.
LossResult kl_loss_and_grad(const MonotoneTriangularMap& map,
                            const std::vector<Eigen::VectorXd>& samples,
                            const TargetDensity& reference, bool parallel);
LossResult kl_loss_and_grad_serial(const MonotoneTriangularMap& map,
                                   const std::vector<Eigen::VectorXd>& samples,
                                   const TargetDensity& reference);
LossResult kl_loss_and_grad_omp(const MonotoneTriangularMap& map,
                                const std::vector<Eigen::VectorXd>& samples,
                                const TargetDensity& reference);

struct TrainResult {
  double loss;
  int iterations;
  bool converged;
};

/// Periodic full-batch map training: warm-started deterministic L-BFGS on the
/// sample-average KL loss, run to a gradient max-norm tolerance or an
/// iteration cap. On divergence the previous parameters are restored and a
/// TrainingError is thrown.
class MapTrainer {
 public:
  int retrain_period = 5000;
  int max_iterations = 200;
  double grad_tol = 1e-6;
  bool warm_start = true;
  /// Full-batch cost cap: larger sample sets are strided down to this size.
  int max_training_samples = 20000;

  TrainResult train(MonotoneTriangularMap& map, const std::vector<Eigen::VectorXd>& samples,
                    const TargetDensity& reference) const;
};

}  // namespace tmsynce

#endif  // TMSYNCE_TRIANGULAR_HPP
