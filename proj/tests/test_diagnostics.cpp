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

#include "tmsynce/diagnostics.hpp"
#include "tmsynce/errors.hpp"
#include "tmsynce/rng.hpp"

using namespace tmsynce;

namespace {
Eigen::VectorXd iid_series(int n, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::VectorXd s(n);
  for (int i = 0; i < n; ++i) s[i] = rng.normal();
  return s;
}

Eigen::VectorXd ar1_series(int n, double coeff, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::VectorXd s(n);
  s[0] = rng.normal();
  const double noise = std::sqrt(1.0 - coeff * coeff);
  for (int i = 1; i < n; ++i) s[i] = coeff * s[i - 1] + noise * rng.normal();
  return s;
}
}  // namespace

TEST_CASE("autocorrelation basics") {
  const Eigen::VectorXd iid = iid_series(100000, 211);
  const Eigen::VectorXd r = autocorrelation(iid, 20);
  CHECK(r[0] == 1.0);
  for (int k = 1; k <= 20; ++k) CHECK(std::abs(r[k]) <= 0.02);

  const Eigen::VectorXd ar = ar1_series(200000, 0.9, 223);
  const Eigen::VectorXd ra = autocorrelation(ar, 5);
  CHECK(ra[1] == doctest::Approx(0.9).epsilon(0.02 / 0.9));

  CHECK_THROWS_AS(autocorrelation(Eigen::VectorXd::Constant(1000, 3.0), 5), DomainError);
}

TEST_CASE("integrated autocorrelation time") {
  const IatResult iid = iat(iid_series(100000, 227));
  CHECK(iid.tau == doctest::Approx(1.0).epsilon(0.1));
  CHECK_FALSE(iid.warning);

  // AR(1) with coefficient 0.9: tau = (1 + 0.9) / (1 - 0.9) = 19.
  const IatResult ar = iat(ar1_series(400000, 0.9, 229));
  CHECK(ar.tau == doctest::Approx(19.0).epsilon(0.15));

  // Thinning relation: duplicating every value doubles tau.
  const Eigen::VectorXd base = ar1_series(100000, 0.5, 233);
  Eigen::VectorXd doubled(2 * base.size());
  for (int i = 0; i < base.size(); ++i) {
    doubled[2 * i] = base[i];
    doubled[2 * i + 1] = base[i];
  }
  const double tau_base = iat(base).tau;
  const double tau_doubled = iat(doubled).tau;
  CHECK(tau_doubled == doctest::Approx(2.0 * tau_base).epsilon(0.15));
}

TEST_CASE("iat clamps at one and flags bad windows") {
  // Strongly anti-correlated series pushes the raw estimate below 1.
  RngStream rng(239);
  Eigen::VectorXd s(10000);
  for (int i = 0; i < s.size(); ++i) s[i] = (i % 2 == 0 ? 1.0 : -1.0) + 0.01 * rng.normal();
  CHECK(iat(s).tau >= 1.0);

  // A random-walk-like series never satisfies the window condition.
  Eigen::VectorXd walk(2000);
  walk[0] = 0.0;
  for (int i = 1; i < walk.size(); ++i) walk[i] = walk[i - 1] + rng.normal();
  const IatResult r = iat(walk);
  CHECK(r.warning);
  CHECK(std::isfinite(r.tau));
}

TEST_CASE("effective sample size") {
  const EssResult iid = ess(iid_series(70000, 241));
  CHECK(iid.ess == doctest::Approx(70000.0).epsilon(0.1));

  const EssResult ar = ess(ar1_series(70000, 0.9, 251));
  CHECK(ar.ess == doctest::Approx(70000.0 / 19.0).epsilon(0.15));

  // ESS never exceeds the series length.
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    const Eigen::VectorXd s = ar1_series(5000, 0.6, seed);
    CHECK(ess(s).ess <= s.size());
  }
}

TEST_CASE("pearson correlation") {
  const Eigen::VectorXd a = iid_series(5000, 257);
  CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  // Invariance under positive affine transforms of either series.
  const Eigen::VectorXd b = iid_series(5000, 263);
  const double base = pearson(a, b);
  CHECK(pearson((2.5 * a.array() + 7.0).matrix(), b) == doctest::Approx(base).epsilon(1e-12));
  CHECK(pearson(a, (0.3 * b.array() - 2.0).matrix()) == doctest::Approx(base).epsilon(1e-12));

  CHECK_THROWS_AS(pearson(Eigen::VectorXd::Constant(100, 1.0), a.head(100)), DomainError);
}

TEST_CASE("summarize takes worst-dimension medians and mean time") {
  std::vector<ChainDiagnostics> chains(3);
  for (int c = 0; c < 3; ++c) {
    chains[c].rho_per_dim = Eigen::VectorXd(2);
    chains[c].tau_per_dim = Eigen::VectorXd(2);
    chains[c].ess_per_dim = Eigen::VectorXd(2);
  }
  chains[0].rho_per_dim << 0.9, 0.8;  // worst 0.8
  chains[1].rho_per_dim << 0.7, 0.75; // worst 0.7
  chains[2].rho_per_dim << 0.6, 0.95; // worst 0.6
  chains[0].tau_per_dim << 2.0, 3.0;
  chains[1].tau_per_dim << 4.0, 1.0;
  chains[2].tau_per_dim << 5.0, 6.0;
  chains[0].ess_per_dim << 100.0, 200.0;
  chains[1].ess_per_dim << 300.0, 150.0;
  chains[2].ess_per_dim << 50.0, 400.0;
  chains[0].wall_seconds = 1.0;
  chains[1].wall_seconds = 2.0;
  chains[2].wall_seconds = 3.0;

  const DiagnosticsReport rep = summarize(chains, "demo", 0.5);
  CHECK(rep.rho_min == 0.7);     // median of {0.8, 0.7, 0.6}
  CHECK(rep.tau_max == 4.0);     // median of {3, 4, 6}
  CHECK(rep.ess_min == 100.0);   // median of {100, 150, 50}
  CHECK(rep.wall_seconds == 2.0);
  CHECK(rep.ess_per_sec == doctest::Approx(100.0 / 2.0));
  CHECK(rep.method == "demo");
}

TEST_CASE("relative columns are arithmetic ratios against the baseline") {
  DiagnosticsReport report;
  report.rho_min = 0.8;
  report.ess_per_sec = 50.0;
  DiagnosticsReport baseline;
  baseline.rho_min = 0.2;
  baseline.ess_per_sec = 5.0;
  apply_baseline(report, baseline);
  REQUIRE(report.rel_rho_min.has_value());
  REQUIRE(report.rel_ess_per_sec.has_value());
  CHECK(*report.rel_rho_min == doctest::Approx(0.8 / 0.2).epsilon(1e-12));
  CHECK(*report.rel_ess_per_sec == doctest::Approx(50.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("median helper") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(median({5.0}) == 5.0);
}
