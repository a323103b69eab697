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

#include "tmsynce/triangular.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "tmsynce/errors.hpp"

namespace tmsynce {

namespace {

// Gauss--Legendre nodes/weights on [0,1] by Newton iteration on P_n.
void gauss_legendre_unit(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // Map from [-1,1] to [0,1].
    nodes[i] = 0.5 * (1.0 - x);
    nodes[n - 1 - i] = 0.5 * (1.0 + x);
    weights[i] = 0.5 * w;
    weights[n - 1 - i] = 0.5 * w;
  }
}

void enumerate_indices(int nvars, int order, std::vector<int>& cur, int remaining,
                       std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == nvars) {
    out.push_back(cur);
    return;
  }
  for (int d = 0; d <= remaining; ++d) {
    cur.push_back(d);
    enumerate_indices(nvars, order, cur, remaining - d, out);
    cur.pop_back();
  }
}

}  // namespace

HermiteBasis::HermiteBasis(int nvars, int total_order) : nvars_(nvars), max_degree_(total_order) {
  std::vector<int> cur;
  enumerate_indices(nvars, total_order, cur, total_order, indices_);
  // Constant term first (enumeration already yields the all-zero index first).
}

void HermiteBasis::eval(const double* x, double* out) const {
  // Probabilists' Hermite values per variable up to max degree.
  double he[8][16];  // nvars x degree; bounds enforced below
  for (int v = 0; v < nvars_; ++v) {
    he[v][0] = 1.0;
    if (max_degree_ >= 1) he[v][1] = x[v];
    for (int k = 2; k <= max_degree_; ++k) {
      he[v][k] = x[v] * he[v][k - 1] - (k - 1) * he[v][k - 2];
    }
  }
  for (std::size_t j = 0; j < indices_.size(); ++j) {
    double prod = 1.0;
    const auto& idx = indices_[j];
    for (int v = 0; v < nvars_; ++v) prod *= he[v][idx[v]];
    out[j] = prod;
  }
}

MonotoneTriangularMap::MonotoneTriangularMap(int dim, int order, int diag_order,
                                             int quad_points, double eps_mono)
    : dim_(dim), order_(order), diag_order_(diag_order), quad_points_(quad_points),
      eps_(eps_mono) {
  if (dim < 1 || order < 1 || diag_order < 0 || quad_points < 2) {
    throw ConfigError("monotone triangular map: invalid configuration");
  }
  if (dim > 8 || std::max(order, diag_order) > 15) {
    throw ConfigError("monotone triangular map: dimension/order out of supported range");
  }
  gauss_legendre_unit(quad_points_, nodes_, weights_);
  int offset = 0;
  for (int k = 0; k < dim_; ++k) {
    off_.emplace_back(k, order_);
    diag_.emplace_back(k + 1, diag_order_);
    if (off_[k].size() > 64 || diag_[k].size() > 64) {
      throw ConfigError("monotone triangular map: basis too large");
    }
    off_offset_.push_back(offset);
    offset += off_[k].size();
    diag_offset_.push_back(offset);
    offset += diag_[k].size();
  }
  // Identity initialization: p_k = 0, q_k = 0, so the integrand exp(q_k) is
  // exactly 1 and the map is a valid bijection before training.
  phi_ = Eigen::VectorXd::Zero(offset);
  shift_ = Eigen::VectorXd::Zero(dim_);
  scale_ = Eigen::VectorXd::Ones(dim_);
}

void MonotoneTriangularMap::set_normalization(const Eigen::VectorXd& shift,
                                              const Eigen::VectorXd& scale) {
  if (shift.size() != dim_ || scale.size() != dim_) {
    throw ConfigError("set_normalization: dimension mismatch");
  }
  if ((scale.array() <= 0.0).any()) {
    throw ConfigError("set_normalization: scales must be positive");
  }
  shift_ = shift;
  scale_ = scale;
}

Eigen::VectorXd MonotoneTriangularMap::normalize(const Eigen::VectorXd& x) const {
  return (x - shift_).cwiseQuotient(scale_);
}

void MonotoneTriangularMap::set_parameters(const Eigen::VectorXd& phi) {
  if (phi.size() != phi_.size()) throw ConfigError("parameter vector size mismatch");
  phi_ = phi;
}

double MonotoneTriangularMap::component_z(int k, const Eigen::VectorXd& z) const {
  double vals[64];
  off_[k].eval(z.data(), vals);
  double p = 0.0;
  for (int j = 0; j < off_[k].size(); ++j) p += phi_[off_offset_[k] + j] * vals[j];

  const double zk = z[k];
  double integral = 0.0;
  double args[8];
  for (int v = 0; v < k; ++v) args[v] = z[v];
  for (int i = 0; i < quad_points_; ++i) {
    args[k] = zk * nodes_[i];
    diag_[k].eval(args, vals);
    double q = 0.0;
    for (int j = 0; j < diag_[k].size(); ++j) q += phi_[diag_offset_[k] + j] * vals[j];
    integral += weights_[i] * std::exp(q);
  }
  return p + zk * integral;
}

double MonotoneTriangularMap::diag_value_z(int k, const Eigen::VectorXd& z) const {
  double vals[64];
  diag_[k].eval(z.data(), vals);
  double q = 0.0;
  for (int j = 0; j < diag_[k].size(); ++j) q += phi_[diag_offset_[k] + j] * vals[j];
  return std::exp(q);
}

double MonotoneTriangularMap::component(int k, const Eigen::VectorXd& x) const {
  return component_z(k, normalize(x));
}

double MonotoneTriangularMap::diag_partial(int k, const Eigen::VectorXd& x) const {
  return diag_value_z(k, normalize(x)) / scale_[k];
}

Eigen::VectorXd MonotoneTriangularMap::forward(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd z = normalize(x);
  Eigen::VectorXd r(dim_);
  for (int k = 0; k < dim_; ++k) r[k] = component_z(k, z);
  return r;
}

double MonotoneTriangularMap::log_det_jacobian(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd z = normalize(x);
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) s += std::log(diag_value_z(k, z)) - std::log(scale_[k]);
  return s;
}

double MonotoneTriangularMap::solve_component(int k, double target, double guess,
                                              const Eigen::VectorXd& z_prev) const {
  Eigen::VectorXd z = z_prev;  // normalized scratch: first k coords fixed
  const auto f = [&](double t) {
    z[k] = t;
    return component_z(k, z) - target;
  };

  double a = std::isfinite(guess) ? guess : 0.0;
  double fa = f(a);
  if (!std::isfinite(fa)) {
    a = 0.0;
    fa = f(a);
  }
  if (fa == 0.0) return a;

  // Geometric bracket expansion in the needed direction.
  const double dir = fa < 0.0 ? 1.0 : -1.0;
  double step = 1.0;
  double b = a + dir * step;
  double fb = f(b);
  int expansions = 0;
  while (std::isfinite(fb) && (fb < 0.0) == (fa < 0.0)) {
    a = b;
    fa = fb;
    step *= 2.0;
    b = a + dir * step;
    fb = f(b);
    if (++expansions > 200) {
      throw InversionError("triangular map inverse: bracket not found");
    }
  }
  if (!std::isfinite(fb)) {
    throw InversionError("triangular map inverse: non-finite during bracketing");
  }

  double lo = std::min(a, b), hi = std::max(a, b);
  double flo = a < b ? fa : fb;
  // f(lo) and f(hi) straddle zero with f increasing.
  (void)flo;
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    z[k] = t;
    const double ft = component_z(k, z) - target;
    if (ft == 0.0) return t;
    if (ft < 0.0) {
      lo = t;
    } else {
      hi = t;
    }
    // Newton step, safeguarded by the bracket.
    const double h = diag_value_z(k, z);
    double tn = t - ft / h;
    if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
    t = tn;
  }
  return 0.5 * (lo + hi);
}

Eigen::VectorXd MonotoneTriangularMap::inverse(const Eigen::VectorXd& r) const {
  return inverse_from(r, shift_);
}

Eigen::VectorXd MonotoneTriangularMap::inverse_from(const Eigen::VectorXd& r,
                                                    const Eigen::VectorXd& guess) const {
  const Eigen::VectorXd guess_z = normalize(guess);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(dim_);
  for (int k = 0; k < dim_; ++k) {
    z[k] = solve_component(k, r[k], guess_z[k], z);
  }
  return shift_ + scale_.cwiseProduct(z);
}

std::string MonotoneTriangularMap::to_json() const {
  nlohmann::json j;
  j["type"] = "monotone_triangular";
  j["dim"] = dim_;
  j["order"] = order_;
  j["diag_order"] = diag_order_;
  j["quad_points"] = quad_points_;
  j["eps_mono"] = eps_;
  j["coefficients"] = std::vector<double>(phi_.data(), phi_.data() + phi_.size());
  j["shift"] = std::vector<double>(shift_.data(), shift_.data() + shift_.size());
  j["scale"] = std::vector<double>(scale_.data(), scale_.data() + scale_.size());
  nlohmann::json off = nlohmann::json::array(), diag = nlohmann::json::array();
  for (int k = 0; k < dim_; ++k) {
    off.push_back(off_[k].indices());
    diag.push_back(diag_[k].indices());
  }
  j["off_diagonal_multi_indices"] = off;
  j["diagonal_multi_indices"] = diag;
  return j.dump(2);
}

MonotoneTriangularMap MonotoneTriangularMap::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("type") != "monotone_triangular") {
    throw ConfigError("map record: unexpected type");
  }
  MonotoneTriangularMap map(j.at("dim").get<int>(), j.at("order").get<int>(),
                            j.at("diag_order").get<int>(), j.at("quad_points").get<int>(),
                            j.at("eps_mono").get<double>());
  const auto coeffs = j.at("coefficients").get<std::vector<double>>();
  if (static_cast<int>(coeffs.size()) != map.num_parameters()) {
    throw ConfigError("map record: coefficient count mismatch");
  }
  for (int k = 0; k < map.dim(); ++k) {
    if (j.at("off_diagonal_multi_indices").at(k).get<std::vector<std::vector<int>>>() !=
        map.off_basis(k).indices()) {
      throw ConfigError("map record: off-diagonal multi-index mismatch");
    }
  }
  map.phi_ = Eigen::Map<const Eigen::VectorXd>(coeffs.data(), coeffs.size());
  if (j.contains("shift")) {
    const auto shift = j.at("shift").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    map.set_normalization(Eigen::Map<const Eigen::VectorXd>(shift.data(), shift.size()),
                          Eigen::Map<const Eigen::VectorXd>(scale.data(), scale.size()));
  }
  return map;
}

namespace {

struct Scratch {
  std::vector<double> off_vals, diag_vals, dT_dq, args;
};

// Per-sample loss and gradient accumulation. Returns false for non-finite
// summands, which the callers exclude and count.
bool accumulate(const MonotoneTriangularMap& map, const Eigen::VectorXd& x,
                const TargetDensity& reference, Scratch& s, double& loss,
                Eigen::VectorXd& grad) {
  const int d = map.dim();
  const int nq = map.quad_points();
  const auto& nodes = map.quad_nodes();
  const auto& weights = map.quad_weights();
  const auto& phi = map.parameters();

  const Eigen::VectorXd z = map.normalize(x);
  Eigen::VectorXd r(d);
  double ldj = 0.0;
  // Stage 1: forward values and log-det; cache nothing heavy, formulas are cheap.
  for (int k = 0; k < d; ++k) {
    r[k] = map.component(k, x);
    ldj += std::log(map.diag_partial(k, x));
  }
  const double lp = reference.log_pdf(r);
  const double term = -(lp + ldj);
  if (!std::isfinite(term)) return false;
  loss += term;

  // Stage 2: gradient. dLoss/dphi = -dlogpi_ref(r)/dr . dr/dphi - dldj/dphi.
  const Eigen::VectorXd g = -reference.log_pdf_grad(r);
  for (int k = 0; k < d; ++k) {
    const auto& off = map.off_basis(k);
    const auto& diag = map.diag_basis(k);
    const int no = off.size();
    const int nd = diag.size();
    s.off_vals.resize(std::max(no, nd));
    s.diag_vals.resize(nd);
    s.dT_dq.assign(nd, 0.0);
    s.args.resize(k + 1);
    for (int v = 0; v < k; ++v) s.args[v] = z[v];

    off.eval(z.data(), s.off_vals.data());
    for (int j = 0; j < no; ++j) {
      grad[map.off_offset(k) + j] += g[k] * s.off_vals[j];
    }

    const double zk = z[k];
    for (int i = 0; i < nq; ++i) {
      s.args[k] = zk * nodes[i];
      diag.eval(s.args.data(), s.diag_vals.data());
      double q = 0.0;
      for (int j = 0; j < nd; ++j) q += phi[map.diag_offset(k) + j] * s.diag_vals[j];
      const double w = weights[i] * std::exp(q) * zk;
      for (int j = 0; j < nd; ++j) s.dT_dq[j] += w * s.diag_vals[j];
    }

    // Log-det term: log dT_k/dz_k = q(z_<k, z_k), linear in the q coefficients.
    s.args[k] = zk;
    diag.eval(s.args.data(), s.diag_vals.data());
    for (int j = 0; j < nd; ++j) {
      grad[map.diag_offset(k) + j] += g[k] * s.dT_dq[j] - s.diag_vals[j];
    }
  }
  return true;
}

}  // namespace

LossResult kl_loss_and_grad_serial(const MonotoneTriangularMap& map,
                                   const std::vector<Eigen::VectorXd>& samples,
                                   const TargetDensity& reference) {
  if (samples.empty()) throw DomainError("kl_loss_and_grad: empty sample set");
  double loss = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(map.num_parameters());
  Scratch scratch;
  std::size_t skipped = 0;
  for (const auto& x : samples) {
    if (!accumulate(map, x, reference, scratch, loss, grad)) ++skipped;
  }
  if (skipped > samples.size() / 100) {
    throw TrainingError("kl_loss_and_grad: more than 1% non-finite summands");
  }
  const double n = static_cast<double>(samples.size() - skipped);
  return {loss / n, grad / n, skipped};
}

LossResult kl_loss_and_grad_omp(const MonotoneTriangularMap& map,
                                const std::vector<Eigen::VectorXd>& samples,
                                const TargetDensity& reference) {
  if (samples.empty()) throw DomainError("kl_loss_and_grad: empty sample set");
  const int n = static_cast<int>(samples.size());
  double loss = 0.0;
  std::size_t skipped = 0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(map.num_parameters());
#ifdef _OPENMP
#pragma omp parallel
  {
    double local_loss = 0.0;
    std::size_t local_skipped = 0;
    Eigen::VectorXd local_grad = Eigen::VectorXd::Zero(map.num_parameters());
    Scratch scratch;
#pragma omp for schedule(static) nowait
    for (int i = 0; i < n; ++i) {
      if (!accumulate(map, samples[i], reference, scratch, local_loss, local_grad)) {
        ++local_skipped;
      }
    }
#pragma omp critical
    {
      loss += local_loss;
      skipped += local_skipped;
      grad += local_grad;
    }
  }
#else
  Scratch scratch;
  for (int i = 0; i < n; ++i) {
    if (!accumulate(map, samples[i], reference, scratch, loss, grad)) ++skipped;
  }
#endif
  if (skipped > samples.size() / 100) {
    throw TrainingError("kl_loss_and_grad: more than 1% non-finite summands");
  }
  const double cnt = static_cast<double>(samples.size() - skipped);
  return {loss / cnt, grad / cnt, skipped};
}

LossResult kl_loss_and_grad(const MonotoneTriangularMap& map,
                            const std::vector<Eigen::VectorXd>& samples,
                            const TargetDensity& reference, bool parallel) {
#ifdef _OPENMP
  if (parallel && !omp_in_parallel()) {
    return kl_loss_and_grad_omp(map, samples, reference);
  }
#else
  (void)parallel;
#endif
  return kl_loss_and_grad_serial(map, samples, reference);
}

namespace {

// Minimal L-BFGS with Armijo backtracking. The KL objective for this map
// family is smooth and close to convex, so a simple line search suffices.
struct LbfgsOutcome {
  double loss;
  int iterations;
  bool converged;
};

LbfgsOutcome lbfgs_minimize(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fn,
                            Eigen::VectorXd& x, int max_iter, double gtol) {
  const int m = 10;
  const int n = static_cast<int>(x.size());
  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;

  Eigen::VectorXd g(n), g_new(n);
  double f = fn(x, g);
  if (!std::isfinite(f)) throw TrainingError("optimizer: non-finite initial loss");

  int it = 0;
  for (; it < max_iter; ++it) {
    if (g.cwiseAbs().maxCoeff() <= gtol) return {f, it, true};

    // Two-loop recursion.
    Eigen::VectorXd q = g;
    const int hmax = static_cast<int>(s_hist.size());
    std::vector<double> alpha(hmax);
    for (int i = hmax - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (hmax > 0) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < hmax; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double dg = dir.dot(g);
    if (dg >= 0.0) {  // not a descent direction; fall back to steepest descent
      dir = -g;
      dg = -g.squaredNorm();
    }

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * dir;
      f_new = fn(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * dg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return {f, it, g.cwiseAbs().maxCoeff() <= gtol};

    // Treat a vanishing relative decrease as convergence; near the optimum
    // the gradient floor can sit above gtol while the loss is fully polished.
    if (f - f_new <= 1e-11 * std::max(1.0, std::abs(f))) {
      x = x_new;
      return {f_new, it + 1, true};
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > m) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }
  return {f, it, g.cwiseAbs().maxCoeff() <= gtol};
}

}  // namespace

namespace {

// With a standard normal reference the loss is an exact least-squares problem
// in the off-diagonal coefficients p_k once the integrand coefficients are
// held fixed: the log-det term does not depend on p_k at all. Solving the
// normal equations in closed form jumps over flat valleys that stall the
// quasi-Newton iteration when p and q have to move together.
void refit_off_coefficients(MonotoneTriangularMap& map,
                            const std::vector<Eigen::VectorXd>& samples) {
  const int d = map.dim();
  Eigen::VectorXd phi = map.parameters();
  for (int k = 0; k < d; ++k) {
    const HermiteBasis& basis = map.off_basis(k);
    const int nb = basis.size();
    phi.segment(map.off_offset(k), nb).setZero();
    map.set_parameters(phi);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nb);
    Eigen::VectorXd f(nb);
    for (const auto& x : samples) {
      const Eigen::VectorXd z = map.normalize(x);
      basis.eval(z.data(), f.data());
      const double integral = map.component(k, x);
      a.noalias() += f * f.transpose();
      b.noalias() -= integral * f;
    }
    phi.segment(map.off_offset(k), nb) = a.ldlt().solve(b);
  }
  map.set_parameters(phi);
}

// Gaussianization starting point: regress z_k on the off-diagonal basis of the
// preceding coordinates and take the residual as the component output, so
//   T_k = (z_k - beta' Phi(z_<k)) / s,  s = residual std,
// written in map form as p_k = -beta' Phi / s and a constant integrand
// q_k = -log s. This captures the conditional mean exactly whenever it is a
// polynomial the basis can represent, leaving the optimizer only corrections.
void regression_init(MonotoneTriangularMap& map,
                     const std::vector<Eigen::VectorXd>& samples) {
  const int d = map.dim();
  const auto n = static_cast<double>(samples.size());
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(map.num_parameters());
  for (int k = 0; k < d; ++k) {
    const HermiteBasis& basis = map.off_basis(k);
    const int nb = basis.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nb);
    Eigen::VectorXd f(nb);
    double zsq = 0.0;
    for (const auto& x : samples) {
      const Eigen::VectorXd z = map.normalize(x);
      basis.eval(z.data(), f.data());
      a.noalias() += f * f.transpose();
      b.noalias() += z[k] * f;
      zsq += z[k] * z[k];
    }
    const Eigen::VectorXd beta = a.ldlt().solve(b);
    const double rss = std::max(zsq - beta.dot(b), 1e-12 * n);
    const double s = std::sqrt(rss / n);
    phi.segment(map.off_offset(k), nb) = -beta / s;
    const HermiteBasis& diag = map.diag_basis(k);
    for (int j = 0; j < diag.size(); ++j) {
      const auto& idx = diag.indices()[j];
      if (std::all_of(idx.begin(), idx.end(), [](int v) { return v == 0; })) {
        phi[map.diag_offset(k) + j] = -std::log(s);
        break;
      }
    }
  }
  map.set_parameters(phi);
}

}  // namespace

TrainResult MapTrainer::train(MonotoneTriangularMap& map,
                              const std::vector<Eigen::VectorXd>& samples,
                              const TargetDensity& reference) const {
  if (static_cast<int>(samples.size()) < 10 * map.num_parameters()) {
    throw TrainingError("train: need at least 10 samples per parameter");
  }
  const int d = map.dim();
  const MonotoneTriangularMap fresh(d, map.order(), map.diag_order(), map.quad_points(),
                                    map.eps_mono());
  const bool untrained = map.parameters() == fresh.parameters() &&
                         map.shift().isZero() && map.scale() == Eigen::VectorXd::Ones(d);

  // Full-batch training cost is capped by a fixed-stride subsample; the
  // stride keeps the subset deterministic and spread over the whole history.
  std::vector<Eigen::VectorXd> reduced;
  const std::vector<Eigen::VectorXd>* training = &samples;
  const std::size_t cap = static_cast<std::size_t>(std::max(max_training_samples,
                                                            10 * map.num_parameters()));
  if (samples.size() > cap) {
    const std::size_t stride = (samples.size() + cap - 1) / cap;
    reduced.reserve(samples.size() / stride + 1);
    for (std::size_t i = 0; i < samples.size(); i += stride) reduced.push_back(samples[i]);
    training = &reduced;
  }

  if (untrained) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), var = Eigen::VectorXd::Zero(d);
    for (const auto& x : *training) mean += x;
    mean /= static_cast<double>(training->size());
    for (const auto& x : *training) var += (x - mean).cwiseAbs2();
    var /= static_cast<double>(training->size() - 1);
    map.set_normalization(mean, var.cwiseSqrt().cwiseMax(1e-8));
  }

  const Eigen::VectorXd phi_prev = map.parameters();

  MonotoneTriangularMap work = map;
  Eigen::VectorXd phi = phi_prev;
  if (untrained || !warm_start) {
    regression_init(work, *training);
    phi = work.parameters();
  }
  const auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
    work.set_parameters(p);
    const LossResult r = kl_loss_and_grad(work, *training, reference, true);
    grad = r.grad;
    return r.loss;
  };

  const bool gaussian_ref = dynamic_cast<const StandardNormalDensity*>(&reference) != nullptr;

  try {
    LbfgsOutcome out = lbfgs_minimize(objective, phi, max_iterations, grad_tol);
    if (!std::isfinite(out.loss)) {
      throw TrainingError("train: optimizer diverged to non-finite loss");
    }
    // Alternate the closed-form refit of the off-diagonal coefficients with
    // further quasi-Newton rounds until neither step makes progress.
    for (int round = 0; gaussian_ref && round < 4; ++round) {
      work.set_parameters(phi);
      refit_off_coefficients(work, *training);
      Eigen::VectorXd trial = work.parameters();
      Eigen::VectorXd grad;
      const double trial_loss = objective(trial, grad);
      if (!std::isfinite(trial_loss) || trial_loss >= out.loss - 1e-10) break;
      const LbfgsOutcome again = lbfgs_minimize(objective, trial, max_iterations, grad_tol);
      if (!std::isfinite(again.loss)) {
        throw TrainingError("train: optimizer diverged to non-finite loss");
      }
      phi = trial;
      out = again;
    }
    map.set_parameters(phi);
    return {out.loss, out.iterations, out.converged};
  } catch (const TrainingError&) {
    map.set_parameters(phi_prev);
    throw;
  }
}

}  // namespace tmsynce
