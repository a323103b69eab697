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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tmsynce/model.hpp"
#include "tmsynce/sampler.hpp"

using namespace tmsynce;

namespace {
Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

ChainState make_state(const TargetDensity& target, const Eigen::VectorXd& theta) {
  ChainState s;
  s.theta = theta;
  s.log_pdf = target.log_pdf(theta);
  s.ref_point = theta;
  s.log_det = 0.0;
  return s;
}
}  // namespace

TEST_CASE("mh_step acceptance rate in the optimal-scaling window") {
  StandardNormalDensity target(2);
  MvNormal prop(optimal_scaling_cov(2));
  RngStream rng(101);
  ChainState state = make_state(target, Eigen::VectorXd::Zero(2));
  const int n = 10000;
  for (int i = 0; i < n; ++i) mh_step(state, target, prop, rng);
  const double rate = static_cast<double>(state.accept_count) / n;
  CHECK(rate > 0.3);
  CHECK(rate < 0.6);
}

TEST_CASE("mh_step acceptance probabilities stay in [0, 1]") {
  BananaDensity target(-4.0);
  MvNormal prop(optimal_scaling_cov(2));
  RngStream rng(103);
  ChainState state = make_state(target, vec2(-4.0, 0.0));
  for (int i = 0; i < 2000; ++i) {
    const double alpha = mh_step(state, target, prop, rng);
    CHECK(alpha >= 0.0);
    CHECK(alpha <= 1.0);
  }
}

TEST_CASE("tm_mh_step with identity map is bit-identical to mh_step") {
  BananaDensity target(-4.0);
  MvNormal prop(optimal_scaling_cov(2));
  IdentityMap id(2);
  RngStream rng_a(107), rng_b(107);
  ChainState a = make_state(target, vec2(-4.0, 0.0));
  ChainState b = a;
  for (int i = 0; i < 10000; ++i) {
    mh_step(a, target, prop, rng_a);
    tm_mh_step(b, target, id, prop, rng_b);
    REQUIRE(a.theta == b.theta);  // exact, not approximate
    REQUIRE(a.log_pdf == b.log_pdf);
    REQUIRE(a.accept_count == b.accept_count);
  }
}

TEST_CASE("synce_propose shares one increment") {
  MvNormal prop(optimal_scaling_cov(2));
  RngStream rng(109);
  const Eigen::VectorXd fine = vec2(1.0, 2.0), coarse = vec2(-1.0, 0.5);
  const auto [pf, pc] = synce_propose(fine, coarse, prop, rng);
  CHECK((pf - fine) == (pc - coarse));  // the increment cancels exactly

  const Eigen::VectorXd same = vec2(0.0, 0.0);
  RngStream rng2(109);
  const auto [qf, qc] = synce_propose(same, same, prop, rng2);
  CHECK(qf == qc);
}

TEST_CASE("synce increments have the requested covariance") {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.3, 0.3, 0.5;
  MvNormal prop(c);
  RngStream rng(113);
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(2);
  const int n = 10000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const auto [pf, pc] = synce_propose(origin, origin, prop, rng);
    sum += pf * pf.transpose();
  }
  sum /= n;
  CHECK((sum - c).cwiseAbs().maxCoeff() < 0.1 * c.norm());
}

TEST_CASE("mixture proposal density integrates to one") {
  // d = 1 quadrature over a wide grid.
  Eigen::MatrixXd c(1, 1);
  c << 0.7;
  MvNormal gauss(c);
  Eigen::VectorXd from(1);
  from << 1.3;
  const double omega = 0.4;
  const double lo = -12.0, hi = 14.0;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    Eigen::VectorXd to(1);
    to << lo + i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    integral += w * std::exp(mixture_log_density(to, from, omega, gauss));
  }
  integral *= h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tm_synce_propose branch behavior") {
  BananaDensity banana(-4.0);
  QuarticDensity quartic(4.0);
  auto fine_map = AnalyticalQuarticMap(4.0);
  auto coarse_map = AnalyticalBananaMap(-4.0);
  MvNormal prop(optimal_scaling_cov(2));

  CoupledChainState state;
  state.fine = make_state(quartic, vec2(4.0, 0.0));
  state.fine.ref_point = fine_map.forward(state.fine.theta);
  state.coarse = make_state(banana, vec2(-4.0, 0.0));
  state.coarse.ref_point = coarse_map.forward(state.coarse.theta);

  SUBCASE("omega = 1 shares the independent draw exactly") {
    ProposalConfig config;
    config.reference_cov = optimal_scaling_cov(2);
    config.omega = 1.0;
    RngStream rng(127);
    for (int i = 0; i < 200; ++i) {
      const CoupledProposal p = tm_synce_propose(state, fine_map, coarse_map, config, prop, rng);
      CHECK(p.independent_branch);
      CHECK(p.r_fine == p.r_coarse);
    }
  }

  SUBCASE("omega = 0 gives a pure shared random walk") {
    ProposalConfig config;
    config.reference_cov = optimal_scaling_cov(2);
    config.omega = 0.0;
    RngStream rng(131);
    for (int i = 0; i < 200; ++i) {
      const CoupledProposal p = tm_synce_propose(state, fine_map, coarse_map, config, prop, rng);
      CHECK_FALSE(p.independent_branch);
      const Eigen::VectorXd inc_fine = p.r_fine - state.fine.ref_point;
      const Eigen::VectorXd inc_coarse = p.r_coarse - state.coarse.ref_point;
      CHECK((inc_fine - inc_coarse).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("coupled_step consumes a fixed RNG budget") {
  BananaDensity banana(-4.0);
  QuarticDensity quartic(4.0);
  AnalyticalQuarticMap fine_map(4.0);
  AnalyticalBananaMap coarse_map(-4.0);
  MvNormal prop(optimal_scaling_cov(2));
  ProposalConfig config;
  config.reference_cov = optimal_scaling_cov(2);
  config.omega = 0.5;

  CoupledChainState state;
  state.fine = make_state(quartic, vec2(4.0, 0.0));
  state.fine.ref_point = fine_map.forward(state.fine.theta);
  state.coarse = make_state(banana, vec2(-4.0, 0.0));
  state.coarse.ref_point = coarse_map.forward(state.coarse.theta);

  RngStream rng(137);
  const int d = 2;
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t before = state.rng_cursor;
    coupled_step(state, quartic, banana, fine_map, coarse_map, config, prop, rng);
    // one branch uniform + one d-vector eta + one acceptance uniform
    CHECK(state.rng_cursor - before == static_cast<std::uint64_t>(d + 2));
  }
}

TEST_CASE("coupled_step keeps identical chains identical") {
  // Same target, same map, same start, omega = 0: all randomness is shared,
  // so the two levels can never diverge.
  BananaDensity banana(-4.0);
  AnalyticalBananaMap map(-4.0);
  MvNormal prop(optimal_scaling_cov(2));
  ProposalConfig config;
  config.reference_cov = optimal_scaling_cov(2);
  config.omega = 0.0;

  CoupledChainState state;
  state.fine = make_state(banana, vec2(-4.0, 0.0));
  state.fine.ref_point = map.forward(state.fine.theta);
  state.coarse = state.fine;

  RngStream rng(139);
  for (int i = 0; i < 2000; ++i) {
    coupled_step(state, banana, banana, map, map, config, prop, rng);
    REQUIRE(state.fine.theta == state.coarse.theta);
  }
  CHECK(state.fine.accept_count == state.coarse.accept_count);
}

TEST_CASE("coupled_step alphas bounded") {
  BananaDensity banana(-4.0);
  QuarticDensity quartic(4.0);
  AnalyticalQuarticMap fine_map(4.0);
  AnalyticalBananaMap coarse_map(-4.0);
  MvNormal prop(optimal_scaling_cov(2));
  ProposalConfig config;
  config.reference_cov = optimal_scaling_cov(2);
  config.omega = 0.5;

  CoupledChainState state;
  state.fine = make_state(quartic, vec2(4.0, 0.0));
  state.fine.ref_point = fine_map.forward(state.fine.theta);
  state.coarse = make_state(banana, vec2(-4.0, 0.0));
  state.coarse.ref_point = coarse_map.forward(state.coarse.theta);

  RngStream rng(149);
  for (int i = 0; i < 1000; ++i) {
    const CoupledStepOutcome out =
        coupled_step(state, quartic, banana, fine_map, coarse_map, config, prop, rng);
    CHECK(out.alpha_fine >= 0.0);
    CHECK(out.alpha_fine <= 1.0);
    CHECK(out.alpha_coarse >= 0.0);
    CHECK(out.alpha_coarse <= 1.0);
  }
}

TEST_CASE("adapt_covariance") {
  RngStream rng(151);
  const int n = 20000, d = 2;
  Eigen::MatrixXd history(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) history(i, j) = rng.normal();

  const Eigen::MatrixXd adapted = adapt_covariance(history, 1e-6);
  const Eigen::MatrixXd expected = optimal_scaling_cov(d);
  CHECK((adapted - expected).cwiseAbs().maxCoeff() < 0.1 * expected(0, 0));

  // Degenerate history: regularization keeps the result SPD.
  Eigen::MatrixXd flat = Eigen::MatrixXd::Zero(100, d);
  const Eigen::MatrixXd reg = adapt_covariance(flat, 1e-6);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reg);
  CHECK(es.eigenvalues().minCoeff() >= (2.38 * 2.38 / d) * 1e-6 * 0.999);
}

TEST_CASE("laplace approximation of a Gaussian is exact") {
  // Standard normal: mode 0, covariance I.
  StandardNormalDensity target(2);
  const LaplaceResult lap = laplace_approximation(target, vec2(0.7, -0.3));
  CHECK(lap.mode.cwiseAbs().maxCoeff() < 1e-4);
  CHECK((lap.covariance - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("run_coupled is deterministic per seed") {
  BananaDensity banana(-4.0);
  QuarticDensity quartic(4.0);
  CoupledMaps maps;
  maps.fine = std::make_shared<AnalyticalQuarticMap>(4.0);
  maps.coarse = std::make_shared<AnalyticalBananaMap>(-4.0);

  RunConfig run;
  run.total_iterations = 2000;
  run.burn_in = 500;
  run.retrain_period = 500;
  ProposalConfig config;
  config.reference_cov = optimal_scaling_cov(2);
  config.omega = 0.5;

  RngStream rng_a = RngStream::for_chain(9, 0);
  RngStream rng_b = RngStream::for_chain(9, 0);
  const CoupledRunResult a = run_coupled(quartic, banana, maps, nullptr, run, config,
                                         vec2(4.0, 0.0), vec2(-4.0, 0.0), rng_a);
  CoupledMaps maps_b = maps;
  const CoupledRunResult b = run_coupled(quartic, banana, maps_b, nullptr, run, config,
                                         vec2(4.0, 0.0), vec2(-4.0, 0.0), rng_b);
  CHECK(a.fine_samples == b.fine_samples);
  CHECK(a.coarse_samples == b.coarse_samples);
  CHECK(a.fine_accepts == b.fine_accepts);
}

TEST_CASE("run_coupled flags burn-in and keeps all samples") {
  BananaDensity banana(-4.0);
  QuarticDensity quartic(4.0);
  CoupledMaps maps;
  maps.fine = std::make_shared<AnalyticalQuarticMap>(4.0);
  maps.coarse = std::make_shared<AnalyticalBananaMap>(-4.0);
  RunConfig run;
  run.total_iterations = 300;
  run.burn_in = 100;
  ProposalConfig config;
  config.reference_cov = optimal_scaling_cov(2);
  RngStream rng = RngStream::for_chain(10, 0);
  const CoupledRunResult r = run_coupled(quartic, banana, maps, nullptr, run, config,
                                         vec2(4.0, 0.0), vec2(-4.0, 0.0), rng);
  CHECK(r.fine_samples.rows() == 300);
  long flagged = 0;
  for (auto f : r.burnin) flagged += f;
  CHECK(flagged == 100);
  CHECK(r.wall_seconds >= 0.0);
}
