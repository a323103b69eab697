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

#include "tmsynce/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "tmsynce/errors.hpp"

namespace tmsynce {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log_pdf(const TargetDensity& target, const Eigen::VectorXd& x) {
  const double v = target.log_pdf(x);
  return std::isnan(v) ? kNegInf : v;
}

}  // namespace

MvNormal::MvNormal(Eigen::MatrixXd cov) : cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols() || cov_.rows() == 0) {
    throw ConfigError("MvNormal: covariance must be square and non-empty");
  }
  if (!cov_.isApprox(cov_.transpose(), 1e-12)) {
    throw ConfigError("MvNormal: covariance must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("MvNormal: covariance must be positive definite");
  }
  chol_ = llt.matrixL();
  const double d = static_cast<double>(cov_.rows());
  log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) -
              chol_.diagonal().array().log().sum();
}

Eigen::VectorXd MvNormal::sample(RngStream& rng) const {
  return chol_ * rng.normal_vector(dim());
}

double MvNormal::log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean) const {
  const Eigen::VectorXd z =
      chol_.triangularView<Eigen::Lower>().solve(Eigen::VectorXd(x - mean));
  return log_norm_ - 0.5 * z.squaredNorm();
}

Eigen::MatrixXd optimal_scaling_cov(int d) {
  if (d <= 0) throw ConfigError("optimal_scaling_cov: dimension must be positive");
  const double s = 2.38 * 2.38 / static_cast<double>(d);
  return s * Eigen::MatrixXd::Identity(d, d);
}

double mh_step(ChainState& state, const TargetDensity& target, const MvNormal& proposal,
               RngStream& rng) {
  const Eigen::VectorXd eta = proposal.sample(rng);
  const Eigen::VectorXd theta_star = state.theta + eta;
  const double lp_star = safe_log_pdf(target, theta_star);
  const double u = rng.uniform();
  const double log_ratio = lp_star - state.log_pdf;
  const bool accept = std::log(u) < log_ratio;
  if (accept) {
    state.theta = theta_star;
    state.log_pdf = lp_star;
    state.ref_point = theta_star;
    state.accept_count += 1;
  }
  state.iteration += 1;
  return std::exp(std::min(0.0, log_ratio));
}

double tm_mh_step(ChainState& state, const TargetDensity& target, const TransportMap& map,
                  const MvNormal& proposal, RngStream& rng, long* inversion_failures) {
  const Eigen::VectorXd eta = proposal.sample(rng);
  const Eigen::VectorXd r_star = state.ref_point + eta;
  Eigen::VectorXd theta_star;
  bool ok = true;
  try {
    theta_star = map.inverse_from(r_star, state.theta);
  } catch (const InversionError&) {
    ok = false;
    if (inversion_failures != nullptr) *inversion_failures += 1;
  }
  const double u = rng.uniform();
  double log_ratio = kNegInf;
  double lp_star = kNegInf, ldj_star = 0.0;
  if (ok) {
    lp_star = safe_log_pdf(target, theta_star);
    ldj_star = map.log_det_jacobian(theta_star);
    // The reference random walk is symmetric; proposal terms cancel exactly.
    log_ratio = (lp_star - state.log_pdf) + (state.log_det - ldj_star);
    if (std::isnan(log_ratio)) log_ratio = kNegInf;
  }
  const bool accept = ok && std::log(u) < log_ratio;
  if (accept) {
    state.theta = theta_star;
    state.log_pdf = lp_star;
    state.ref_point = r_star;
    state.log_det = ldj_star;
    state.accept_count += 1;
  }
  state.iteration += 1;
  return std::exp(std::min(0.0, log_ratio));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> synce_propose(const Eigen::VectorXd& fine,
                                                          const Eigen::VectorXd& coarse,
                                                          const MvNormal& proposal,
                                                          RngStream& rng) {
  const Eigen::VectorXd eta = proposal.sample(rng);
  return {fine + eta, coarse + eta};
}

double mixture_log_density(const Eigen::VectorXd& r_to, const Eigen::VectorXd& r_from,
                           double omega, const MvNormal& gauss) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(r_to.size());
  if (omega <= 0.0) return gauss.log_pdf(r_to, r_from);
  if (omega >= 1.0) return gauss.log_pdf(r_to, zero);
  const double la = std::log(omega) + gauss.log_pdf(r_to, zero);
  const double lb = std::log1p(-omega) + gauss.log_pdf(r_to, r_from);
  const double hi = std::max(la, lb);
  return hi + std::log(std::exp(la - hi) + std::exp(lb - hi));
}

CoupledProposal tm_synce_propose(CoupledChainState& state, const TransportMap& fine_map,
                                 const TransportMap& coarse_map, const ProposalConfig& config,
                                 const MvNormal& reference_proposal, RngStream& rng) {
  CoupledProposal out;
  const double branch_u = rng.uniform();
  out.independent_branch = branch_u < config.omega;
  const Eigen::VectorXd eta = reference_proposal.sample(rng);
  if (out.independent_branch) {
    out.r_fine = eta;
    out.r_coarse = eta;
  } else {
    out.r_fine = state.fine.ref_point + eta;
    out.r_coarse = state.coarse.ref_point + eta;
  }
  try {
    out.theta_fine = fine_map.inverse_from(out.r_fine, state.fine.theta);
  } catch (const InversionError&) {
    out.fine_ok = false;
  }
  try {
    out.theta_coarse = coarse_map.inverse_from(out.r_coarse, state.coarse.theta);
  } catch (const InversionError&) {
    out.coarse_ok = false;
  }
  return out;
}

namespace {

struct LevelDecision {
  bool accepted = false;
  double alpha = 0.0;
  double lp = 0.0, ldj = 0.0;
};

LevelDecision level_accept(const ChainState& state, const TargetDensity& target,
                           const TransportMap& map, const Eigen::VectorXd& r_star,
                           const Eigen::VectorXd& theta_star, bool ok, double omega,
                           const MvNormal& gauss, double log_u) {
  LevelDecision d;
  if (!ok) return d;
  d.lp = safe_log_pdf(target, theta_star);
  d.ldj = map.log_det_jacobian(theta_star);
  const double q_fwd = mixture_log_density(r_star, state.ref_point, omega, gauss);
  const double q_rev = mixture_log_density(state.ref_point, r_star, omega, gauss);
  double log_ratio = (d.lp - state.log_pdf) + (q_rev - q_fwd) + (state.log_det - d.ldj);
  if (std::isnan(log_ratio)) log_ratio = kNegInf;
  d.alpha = std::exp(std::min(0.0, log_ratio));
  d.accepted = log_u < log_ratio;
  return d;
}

void apply_accept(ChainState& state, const Eigen::VectorXd& theta, const Eigen::VectorXd& r,
                  const LevelDecision& d) {
  state.theta = theta;
  state.log_pdf = d.lp;
  state.ref_point = r;
  state.log_det = d.ldj;
  state.accept_count += 1;
}

}  // namespace

CoupledStepOutcome coupled_step(CoupledChainState& state, const TargetDensity& fine_target,
                                const TargetDensity& coarse_target, const TransportMap& fine_map,
                                const TransportMap& coarse_map, const ProposalConfig& config,
                                const MvNormal& reference_proposal, RngStream& rng) {
  const std::uint64_t draws_before = rng.draw_count();
  CoupledProposal prop =
      tm_synce_propose(state, fine_map, coarse_map, config, reference_proposal, rng);
  const double u = rng.uniform();
  const double log_u = std::log(u);

  CoupledStepOutcome out;
  out.independent_branch = prop.independent_branch;

  const LevelDecision fine = level_accept(state.fine, fine_target, fine_map, prop.r_fine,
                                          prop.theta_fine, prop.fine_ok, config.omega,
                                          reference_proposal, log_u);
  const LevelDecision coarse = level_accept(state.coarse, coarse_target, coarse_map,
                                            prop.r_coarse, prop.theta_coarse, prop.coarse_ok,
                                            config.omega, reference_proposal, log_u);
  out.alpha_fine = fine.alpha;
  out.alpha_coarse = coarse.alpha;
  out.fine_accepted = fine.accepted;
  out.coarse_accepted = coarse.accepted;
  if (fine.accepted) apply_accept(state.fine, prop.theta_fine, prop.r_fine, fine);
  if (coarse.accepted) apply_accept(state.coarse, prop.theta_coarse, prop.r_coarse, coarse);
  state.fine.iteration += 1;
  state.coarse.iteration += 1;
  state.rng_cursor += rng.draw_count() - draws_before;
  return out;
}

Eigen::MatrixXd adapt_covariance(const Eigen::MatrixXd& history, double epsilon) {
  const long n = history.rows();
  const long d = history.cols();
  if (n < 2) throw DomainError("adapt_covariance: need at least two history rows");
  const Eigen::RowVectorXd mean = history.colwise().mean();
  const Eigen::MatrixXd centered = history.rowwise() - mean;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  cov += epsilon * Eigen::MatrixXd::Identity(d, d);
  return (2.38 * 2.38 / static_cast<double>(d)) * cov;
}

namespace {

// Nelder--Mead on -log_pdf; good enough for the low-dimensional posteriors
// used here.
Eigen::VectorXd nelder_mead_min(const TargetDensity& target, Eigen::VectorXd init) {
  const int d = target.dim();
  const auto f = [&](const Eigen::VectorXd& x) {
    const double v = target.log_pdf(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  const int n = d + 1;
  std::vector<Eigen::VectorXd> pts(n, init);
  std::vector<double> vals(n);
  for (int i = 0; i < d; ++i) {
    const double step = 0.1 * std::max(1.0, std::abs(init[i]));
    pts[i + 1][i] += step;
  }
  for (int i = 0; i < n; ++i) vals[i] = f(pts[i]);

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  for (int iter = 0; iter < 4000; ++iter) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> p2(n);
    std::vector<double> v2(n);
    for (int i = 0; i < n; ++i) {
      p2[i] = pts[order[i]];
      v2[i] = vals[order[i]];
    }
    pts.swap(p2);
    vals.swap(v2);
    double spread = 0.0;
    for (int i = 1; i < n; ++i) spread = std::max(spread, (pts[i] - pts[0]).norm());
    if (spread < 1e-10 && std::isfinite(vals[0])) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n - 1; ++i) centroid += pts[i];
    centroid /= static_cast<double>(n - 1);

    const Eigen::VectorXd xr = centroid + alpha * (centroid - pts[n - 1]);
    const double fr = f(xr);
    if (fr < vals[0]) {
      const Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
      const double fe = f(xe);
      if (fe < fr) {
        pts[n - 1] = xe;
        vals[n - 1] = fe;
      } else {
        pts[n - 1] = xr;
        vals[n - 1] = fr;
      }
    } else if (fr < vals[n - 2]) {
      pts[n - 1] = xr;
      vals[n - 1] = fr;
    } else {
      const Eigen::VectorXd xc = centroid + rho * (pts[n - 1] - centroid);
      const double fc = f(xc);
      if (fc < vals[n - 1]) {
        pts[n - 1] = xc;
        vals[n - 1] = fc;
      } else {
        for (int i = 1; i < n; ++i) {
          pts[i] = pts[0] + sigma * (pts[i] - pts[0]);
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (vals[i] < vals[best]) best = i;
  }
  return pts[best];
}

}  // namespace

LaplaceResult laplace_approximation(const TargetDensity& target, Eigen::VectorXd init) {
  const int d = target.dim();
  if (init.size() != d) throw ConfigError("laplace_approximation: init dimension mismatch");
  LaplaceResult out;
  out.mode = nelder_mead_min(target, std::move(init));

  Eigen::MatrixXd hess(d, d);
  Eigen::VectorXd h(d);
  for (int i = 0; i < d; ++i) h[i] = 1e-4 * std::max(1.0, std::abs(out.mode[i]));
  const double f0 = target.log_pdf(out.mode);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd xp = out.mode, xm = out.mode;
    xp[i] += h[i];
    xm[i] -= h[i];
    hess(i, i) = (target.log_pdf(xp) - 2.0 * f0 + target.log_pdf(xm)) / (h[i] * h[i]);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      Eigen::VectorXd xpp = out.mode, xpm = out.mode, xmp = out.mode, xmm = out.mode;
      xpp[i] += h[i];
      xpp[j] += h[j];
      xpm[i] += h[i];
      xpm[j] -= h[j];
      xmp[i] -= h[i];
      xmp[j] += h[j];
      xmm[i] -= h[i];
      xmm[j] -= h[j];
      const double v = (target.log_pdf(xpp) - target.log_pdf(xpm) - target.log_pdf(xmp) +
                        target.log_pdf(xmm)) /
                       (4.0 * h[i] * h[j]);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  if (!hess.allFinite()) {
    throw DomainError("laplace_approximation: non-finite Hessian at the mode");
  }
  Eigen::MatrixXd neg_hess = -hess;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(neg_hess + jitter * eye);
    if (llt.info() == Eigen::Success) {
      out.covariance = llt.solve(eye);
      out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
      return out;
    }
    jitter = (jitter == 0.0) ? 1e-10 : 10.0 * jitter;
  }
  throw DomainError("laplace_approximation: Hessian is not negative definite at the mode");
}

namespace {

ChainState init_chain_state(const TargetDensity& target, const TransportMap& map,
                            const Eigen::VectorXd& init) {
  ChainState s;
  s.theta = init;
  s.log_pdf = safe_log_pdf(target, init);
  if (!std::isfinite(s.log_pdf)) {
    throw ConfigError("initial state has zero posterior density");
  }
  s.ref_point = map.forward(init);
  s.log_det = map.log_det_jacobian(init);
  return s;
}

void refresh_cache(ChainState& s, const TransportMap& map) {
  s.ref_point = map.forward(s.theta);
  s.log_det = map.log_det_jacobian(s.theta);
}

Eigen::MatrixXd rows_to_matrix(const std::vector<Eigen::VectorXd>& rows) {
  Eigen::MatrixXd m(static_cast<long>(rows.size()), rows.empty() ? 0 : rows[0].size());
  for (long i = 0; i < m.rows(); ++i) m.row(i) = rows[static_cast<size_t>(i)];
  return m;
}

std::vector<Eigen::VectorXd> matrix_head_rows(const Eigen::MatrixXd& m, long n) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) out.push_back(m.row(i));
  return out;
}

}  // namespace

CoupledRunResult run_coupled(const TargetDensity& fine_target, const TargetDensity& coarse_target,
                             CoupledMaps& maps, const MapTrainer* trainer,
                             const RunConfig& run, const ProposalConfig& proposal,
                             const Eigen::VectorXd& init_fine, const Eigen::VectorXd& init_coarse,
                             RngStream& rng) {
  const int d = fine_target.dim();
  if (coarse_target.dim() != d) throw ConfigError("run_coupled: level dimensions differ");
  if (run.burn_in >= run.total_iterations) {
    throw ConfigError("run_coupled: burn-in must be shorter than the run");
  }
  std::shared_ptr<TransportMap> fine_eff =
      maps.deep ? std::make_shared<ComposedMap>(maps.coarse, maps.fine) : maps.fine;

  CoupledRunResult res;
  const long n = run.total_iterations;
  res.fine_samples.resize(n, d);
  res.coarse_samples.resize(n, d);
  res.fine_log_pdf.resize(static_cast<size_t>(n));
  res.coarse_log_pdf.resize(static_cast<size_t>(n));
  res.fine_accepted.resize(static_cast<size_t>(n));
  res.coarse_accepted.resize(static_cast<size_t>(n));
  res.independent_branch.resize(static_cast<size_t>(n));
  res.burnin.resize(static_cast<size_t>(n));

  CoupledChainState state;
  state.fine = init_chain_state(fine_target, *fine_eff, init_fine);
  state.coarse = init_chain_state(coarse_target, *maps.coarse, init_coarse);

  MvNormal ref_prop(proposal.reference_cov);
  const StandardNormalDensity std_normal(d);
  bool first_fine_retrain = true;
  bool first_coarse_retrain = true;
  std::vector<Eigen::VectorXd> ref_history;
  if (proposal.adaptation.enabled) {
    ref_history.reserve(static_cast<size_t>(run.burn_in));
  }

  const auto t0 = std::chrono::steady_clock::now();
  for (long i = 1; i <= n; ++i) {
    const CoupledStepOutcome step = coupled_step(state, fine_target, coarse_target, *fine_eff,
                                                 *maps.coarse, proposal, ref_prop, rng);
    const size_t k = static_cast<size_t>(i - 1);
    res.fine_samples.row(i - 1) = state.fine.theta;
    res.coarse_samples.row(i - 1) = state.coarse.theta;
    res.fine_log_pdf[k] = state.fine.log_pdf;
    res.coarse_log_pdf[k] = state.coarse.log_pdf;
    res.fine_accepted[k] = step.fine_accepted ? 1 : 0;
    res.coarse_accepted[k] = step.coarse_accepted ? 1 : 0;
    res.independent_branch[k] = step.independent_branch ? 1 : 0;
    res.burnin[k] = (i <= run.burn_in) ? 1 : 0;
    if (proposal.adaptation.enabled && i <= run.burn_in) {
      ref_history.push_back(state.fine.ref_point);
    }

    const bool trainable =
        trainer != nullptr && (maps.fine_trainable != nullptr || maps.coarse_trainable != nullptr);
    if (trainable && run.retrain_period > 0 && i % run.retrain_period == 0 && i < n) {
      const auto fine_hist = matrix_head_rows(res.fine_samples, i);
      const auto coarse_hist = matrix_head_rows(res.coarse_samples, i);
      if (maps.coarse_trainable != nullptr) {
        MapTrainer t = *trainer;
        if (maps.coarse_pretrained && first_coarse_retrain) t.warm_start = false;
        try {
          t.train(*maps.coarse_trainable, coarse_hist, std_normal);
          first_coarse_retrain = false;
        } catch (const TrainingError& e) {
          res.events.push_back("coarse map retrain skipped at iteration " + std::to_string(i) +
                               ": " + e.what());
        }
      }
      if (maps.fine_trainable != nullptr) {
        const TargetDensity& fine_ref = maps.deep ? coarse_target
                                                  : static_cast<const TargetDensity&>(std_normal);
        MapTrainer t = *trainer;
        if (maps.fine_pretrained && first_fine_retrain) t.warm_start = false;
        try {
          t.train(*maps.fine_trainable, fine_hist, fine_ref);
          first_fine_retrain = false;
        } catch (const TrainingError& e) {
          res.events.push_back("fine map retrain skipped at iteration " + std::to_string(i) +
                               ": " + e.what());
        }
      }
      refresh_cache(state.fine, *fine_eff);
      refresh_cache(state.coarse, *maps.coarse);
    }

    const AdaptationSettings& ad = proposal.adaptation;
    if (ad.enabled && i % ad.epoch_length == 0 && i >= ad.warmup && i <= run.burn_in &&
        ref_history.size() >= 2) {
      ref_prop = MvNormal(adapt_covariance(rows_to_matrix(ref_history), ad.epsilon));
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  res.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  res.fine_accepts = state.fine.accept_count;
  res.coarse_accepts = state.coarse.accept_count;
  return res;
}

SingleRunResult run_single(const TargetDensity& target, const TransportMap& map,
                           long iterations, long burn_in, const ProposalConfig& proposal,
                           const Eigen::VectorXd& init, RngStream& rng) {
  const int d = target.dim();
  if (burn_in >= iterations) {
    throw ConfigError("run_single: burn-in must be shorter than the run");
  }
  SingleRunResult res;
  res.samples.resize(iterations, d);
  res.burnin.resize(static_cast<size_t>(iterations));

  ChainState state = init_chain_state(target, map, init);
  MvNormal prop(proposal.reference_cov);
  std::vector<Eigen::VectorXd> ref_history;

  const auto t0 = std::chrono::steady_clock::now();
  for (long i = 1; i <= iterations; ++i) {
    tm_mh_step(state, target, map, prop, rng);
    res.samples.row(i - 1) = state.theta;
    res.burnin[static_cast<size_t>(i - 1)] = (i <= burn_in) ? 1 : 0;
    const AdaptationSettings& ad = proposal.adaptation;
    if (ad.enabled && i <= burn_in) {
      ref_history.push_back(state.ref_point);
      if (i % ad.epoch_length == 0 && i >= ad.warmup && ref_history.size() >= 2) {
        prop = MvNormal(adapt_covariance(rows_to_matrix(ref_history), ad.epsilon));
      }
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  res.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  res.accepts = state.accept_count;
  return res;
}

}  // namespace tmsynce
