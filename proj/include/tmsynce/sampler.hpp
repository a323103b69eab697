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

#ifndef TMSYNCE_SAMPLER_HPP
#define TMSYNCE_SAMPLER_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tmsynce/model.hpp"
#include "tmsynce/rng.hpp"
#include "tmsynce/transport.hpp"
#include "tmsynce/triangular.hpp"

namespace tmsynce {

/// Multivariate normal helper with cached Cholesky factor.
class MvNormal {
 public:
  explicit MvNormal(Eigen::MatrixXd cov);
  Eigen::VectorXd sample(RngStream& rng) const;                     // mean zero
  double log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean) const;
  const Eigen::MatrixXd& cov() const { return cov_; }
  int dim() const { return static_cast<int>(cov_.rows()); }

 private:
  Eigen::MatrixXd cov_, chol_;
  double log_norm_;
};

/// Scaled identity covariance from the Gaussian optimal-scaling rule,
/// (2.38^2 / d) I.
Eigen::MatrixXd optimal_scaling_cov(int d);

struct AdaptationSettings {
  bool enabled = false;
  int epoch_length = 1000;
  int warmup = 1000;       // iterations before the first adaptation
  double epsilon = 1e-6;   // additive regularization
};

struct ProposalConfig {
  Eigen::MatrixXd reference_cov;  // C_r, SPD
  double omega = 0.5;             // probability of the shared independent branch
  AdaptationSettings adaptation;
};

struct ChainState {
  Eigen::VectorXd theta;
  double log_pdf = 0.0;
  Eigen::VectorXd ref_point;  // cached T(theta)
  double log_det = 0.0;       // cached log|det J_T(theta)|
  long iteration = 0;
  long accept_count = 0;
};

struct CoupledChainState {
  ChainState fine;
  ChainState coarse;
  std::uint64_t rng_cursor = 0;  // logical draws consumed by coupled steps
};

struct RunConfig {
  long total_iterations = 100000;
  long burn_in = 30000;
  int retrain_period = 5000;
  int repetitions = 5;
  std::uint64_t master_seed = 1;
};

/// Plain random-walk Metropolis--Hastings step. Consumes exactly one
/// proposal vector and one acceptance uniform. Returns the acceptance
/// probability used.
double mh_step(ChainState& state, const TargetDensity& target, const MvNormal& proposal,
               RngStream& rng);

/// Transport-map MH step (reference random walk, Jacobian-adjusted ratio).
/// Inversion failures count as rejections; the failure counter, when
/// non-null, is incremented.
double tm_mh_step(ChainState& state, const TargetDensity& target, const TransportMap& map,
                  const MvNormal& proposal, RngStream& rng, long* inversion_failures = nullptr);

/// Shared-increment proposal pair: one eta for both states.
std::pair<Eigen::VectorXd, Eigen::VectorXd> synce_propose(const Eigen::VectorXd& fine,
                                                          const Eigen::VectorXd& coarse,
                                                          const MvNormal& proposal,
                                                          RngStream& rng);

/// Log density of the mixture reference proposal
///   q_r(r' | r) = omega N(r'; 0, C_r) + (1-omega) N(r'; r, C_r).
double mixture_log_density(const Eigen::VectorXd& r_to, const Eigen::VectorXd& r_from,
                           double omega, const MvNormal& gauss);

struct CoupledProposal {
  Eigen::VectorXd r_fine, r_coarse;          // reference-space proposals
  Eigen::VectorXd theta_fine, theta_coarse;  // mapped back to target spaces
  bool independent_branch = false;
  bool fine_ok = true, coarse_ok = true;     // inversion success per level
};

/// TM-SYNCE proposal: one shared branch uniform, one shared eta_r. Refreshes
/// stale reference caches before proposing.
CoupledProposal tm_synce_propose(CoupledChainState& state, const TransportMap& fine_map,
                                 const TransportMap& coarse_map, const ProposalConfig& config,
                                 const MvNormal& reference_proposal, RngStream& rng);

struct CoupledStepOutcome {
  bool fine_accepted = false, coarse_accepted = false;
  bool independent_branch = false;
  double alpha_fine = 0.0, alpha_coarse = 0.0;
};

/// One coupled iteration: shared proposal randomness plus one shared
/// acceptance uniform; each level accepts marginally.
CoupledStepOutcome coupled_step(CoupledChainState& state, const TargetDensity& fine_target,
                                const TargetDensity& coarse_target, const TransportMap& fine_map,
                                const TransportMap& coarse_map, const ProposalConfig& config,
                                const MvNormal& reference_proposal, RngStream& rng);

/// Haario-style covariance update from reference-space history (rows are
/// states): (2.38^2/d) (cov + epsilon I).
Eigen::MatrixXd adapt_covariance(const Eigen::MatrixXd& history, double epsilon);

struct LaplaceResult {
  Eigen::VectorXd mode;
  Eigen::MatrixXd covariance;
};

/// Mode by Nelder--Mead ascent, covariance from the finite-difference
/// Hessian at the mode.
LaplaceResult laplace_approximation(const TargetDensity& target, Eigen::VectorXd init);

/// Output of one coupled repetition. Burn-in samples are flagged, not
/// dropped.
struct CoupledRunResult {
  Eigen::MatrixXd fine_samples, coarse_samples;  // N x d
  std::vector<double> fine_log_pdf, coarse_log_pdf;
  std::vector<std::uint8_t> fine_accepted, coarse_accepted, independent_branch, burnin;
  double wall_seconds = 0.0;
  long fine_accepts = 0, coarse_accepts = 0;
  long inversion_failures = 0;
  std::vector<std::string> events;  // training failures and similar
};

struct CoupledMaps {
  std::shared_ptr<TransportMap> fine;    // direct: level map; deep: fine->coarse map
  std::shared_ptr<TransportMap> coarse;  // coarse->reference map
  bool deep = false;
  // Trainable views; null when the corresponding map is analytical/identity.
  std::shared_ptr<MonotoneTriangularMap> fine_trainable;
  std::shared_ptr<MonotoneTriangularMap> coarse_trainable;
  // Set when a map was pretrained on a Laplace approximation. Its first
  // in-run retrain then reinitializes from real chain samples instead of
  // warm-starting, since the Gaussian fit can sit in a poor basin for
  // strongly non-Gaussian targets.
  bool fine_pretrained = false;
  bool coarse_pretrained = false;
};

/// Full coupled run with periodic retraining and reference-covariance
/// adaptation (frozen at burn-in end). All randomness comes from `rng`, so
/// repetitions are bit-reproducible per seed.
CoupledRunResult run_coupled(const TargetDensity& fine_target, const TargetDensity& coarse_target,
                             CoupledMaps& maps, const MapTrainer* trainer,
                             const RunConfig& run, const ProposalConfig& proposal,
                             const Eigen::VectorXd& init_fine, const Eigen::VectorXd& init_coarse,
                             RngStream& rng);

/// Single-level run (used for coarse-only MLMC samples and fine-only
/// references); same kernel family, random-walk reference proposal.
struct SingleRunResult {
  Eigen::MatrixXd samples;
  std::vector<std::uint8_t> burnin;
  long accepts = 0;
  double wall_seconds = 0.0;
};

SingleRunResult run_single(const TargetDensity& target, const TransportMap& map,
                           long iterations, long burn_in, const ProposalConfig& proposal,
                           const Eigen::VectorXd& init, RngStream& rng);

}  // namespace tmsynce

#endif  // TMSYNCE_SAMPLER_HPP
