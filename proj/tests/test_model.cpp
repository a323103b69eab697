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
#include <limits>

#include "tmsynce/errors.hpp"
#include "tmsynce/model.hpp"
#include "tmsynce/rng.hpp"

using namespace tmsynce;

namespace {
Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("banana log density values") {
  BananaDensity banana(-4.0);
  CHECK(banana.log_pdf(vec2(-4.0, 0.0)) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(banana.log_pdf(vec2(-3.0, -1.0)) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(banana.log_pdf(vec2(-4.0, 1.0)) == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("banana rejects non-finite input") {
  BananaDensity banana(-4.0);
  CHECK_THROWS_AS(banana.log_pdf(vec2(std::numeric_limits<double>::quiet_NaN(), 0.0)),
                  DomainError);
  CHECK_THROWS_AS(banana.log_pdf(vec2(std::numeric_limits<double>::infinity(), 0.0)),
                  DomainError);
}

TEST_CASE("quartic log density values") {
  QuarticDensity quartic(4.0);
  CHECK(quartic.log_pdf(vec2(4.0, 0.0)) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(quartic.log_pdf(vec2(5.0, -2.0)) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(quartic.log_pdf(vec2(3.0, 0.0)) == doctest::Approx(-2.5).epsilon(1e-14));
}

TEST_CASE("gaussian posterior basics") {
  // m = 1 scalar observation; forward model picks the first coordinate.
  Eigen::MatrixXd sigma(1, 1);
  sigma << 1.0;
  Eigen::VectorXd data(1);
  data << 1.0;
  std::vector<std::pair<double, double>> box = {{-2.0, 2.0}};
  GaussianPosterior post(
      [](const Eigen::VectorXd& t) {
        Eigen::VectorXd out(1);
        out << t[0];
        return out;
      },
      data, sigma, box);

  Eigen::VectorXd inside(1), at_data(1), outside(1);
  inside << 0.0;
  at_data << 1.0;
  outside << 3.0;
  CHECK(post.log_pdf(at_data) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(post.log_pdf(inside) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(post.log_pdf(outside) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("gaussian posterior support boundary") {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd data = Eigen::VectorXd::Zero(1);
  std::vector<std::pair<double, double>> box = {{-1.0, 1.0}};
  GaussianPosterior post(
      [](const Eigen::VectorXd& t) {
        Eigen::VectorXd out(1);
        out << 0.0;
        return out;
      },
      data, sigma, box);
  const double delta = 1e-9;
  Eigen::VectorXd just_in(1), just_out(1);
  just_in << 1.0 - delta;
  just_out << 1.0 + delta;
  CHECK(std::isfinite(post.log_pdf(just_in)));
  CHECK(post.log_pdf(just_out) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("gaussian posterior requires SPD noise covariance") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  Eigen::VectorXd data = Eigen::VectorXd::Zero(2);
  std::vector<std::pair<double, double>> box = {{-1.0, 1.0}};
  auto fwd = [](const Eigen::VectorXd& t) { return Eigen::VectorXd::Zero(2).eval(); };
  CHECK_THROWS_AS(GaussianPosterior(fwd, data, bad, box), ConfigError);
}

TEST_CASE("non-finite forward output rejects the point") {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd data = Eigen::VectorXd::Zero(1);
  std::vector<std::pair<double, double>> box = {{-1.0, 1.0}};
  GaussianPosterior post(
      [](const Eigen::VectorXd& t) {
        Eigen::VectorXd out(1);
        out << std::numeric_limits<double>::quiet_NaN();
        return out;
      },
      data, sigma, box);
  CHECK(post.log_pdf(Eigen::VectorXd::Zero(1)) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("sample_reference determinism and moments") {
  RngStream a(42), b(42);
  auto xs = sample_reference(1000, 2, a);
  auto ys = sample_reference(1000, 2, b);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(xs[i] == ys[i]);

  RngStream c(7);
  const int n = 100000;
  auto zs = sample_reference(n, 2, c);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero(), var = Eigen::Vector2d::Zero();
  for (const auto& z : zs) mean += z;
  mean /= n;
  for (const auto& z : zs) var += (z - mean).cwiseAbs2();
  var /= n - 1;
  const double tol = 4.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean[0]) < tol);
  CHECK(std::abs(mean[1]) < tol);
  CHECK(std::abs(var[0] - 1.0) < 0.05);
  CHECK(std::abs(var[1] - 1.0) < 0.05);
}

TEST_CASE("banana sampler moments") {
  RngStream rng(11);
  const int n = 100000;
  auto xs = sample_banana(n, rng);
  double m1 = 0, m2 = 0;
  for (const auto& x : xs) {
    m1 += x[0];
    m2 += x[1];
  }
  m1 /= n;
  m2 /= n;
  double v1 = 0, v2 = 0;
  for (const auto& x : xs) {
    v1 += (x[0] - m1) * (x[0] - m1);
    v2 += (x[1] - m2) * (x[1] - m2);
  }
  v1 /= n - 1;
  v2 /= n - 1;
  // E[x1] = -4, Var[x1] = 1; E[x2] = -1, Var[x2] = 3. Five standard errors.
  const double se_mean1 = std::sqrt(1.0 / n);
  const double se_mean2 = std::sqrt(3.0 / n);
  CHECK(std::abs(m1 + 4.0) < 5 * se_mean1);
  CHECK(std::abs(m2 + 1.0) < 5 * se_mean2);
  CHECK(v1 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(v2 == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("quartic sampler moments") {
  RngStream rng(12);
  const int n = 100000;
  auto xs = sample_quartic(n, rng);
  double m2 = 0;
  for (const auto& x : xs) m2 += x[1];
  m2 /= n;
  double v2 = 0;
  for (const auto& x : xs) v2 += (x[1] - m2) * (x[1] - m2);
  v2 /= n - 1;
  // x2 = z2 - z1^2 - z1^4: mean -4, variance 123 from Gaussian moments.
  CHECK(std::abs(m2 + 4.0) < 5 * std::sqrt(123.0 / n));
  CHECK(v2 == doctest::Approx(123.0).epsilon(0.15));
}

TEST_CASE("banana sampler agrees with the density") {
  // Kernel-free check: (x1 - s1, x2 + (x1 - s1)^2) of sampled points must be
  // standard normal in mean, variance, and covariance.
  RngStream rng(13);
  const int n = 100000;
  auto xs = sample_banana(n, rng);
  double mu1 = 0, mu2 = 0, v1 = 0, v2 = 0, cov = 0;
  std::vector<Eigen::Vector2d> zs;
  zs.reserve(n);
  for (const auto& x : xs) {
    const double z1 = x[0] + 4.0;
    const double z2 = x[1] + z1 * z1;
    zs.emplace_back(z1, z2);
    mu1 += z1;
    mu2 += z2;
  }
  mu1 /= n;
  mu2 /= n;
  for (const auto& z : zs) {
    v1 += (z[0] - mu1) * (z[0] - mu1);
    v2 += (z[1] - mu2) * (z[1] - mu2);
    cov += (z[0] - mu1) * (z[1] - mu2);
  }
  v1 /= n - 1;
  v2 /= n - 1;
  cov /= n - 1;
  const double se = 5.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mu1) < se);
  CHECK(std::abs(mu2) < se);
  CHECK(std::abs(v1 - 1.0) < 5 * std::sqrt(2.0 / n));
  CHECK(std::abs(v2 - 1.0) < 5 * std::sqrt(2.0 / n));
  CHECK(std::abs(cov) < se);
}

TEST_CASE("synthetic bi-fidelity model is finite on the prior box") {
  SyntheticBiFidelityModel model;
  RngStream rng(3);
  const auto& box = model.prior_box();
  CHECK(box.size() == 4);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd theta(4);
    for (int j = 0; j < 4; ++j) {
      theta[j] = box[j].first + rng.uniform() * (box[j].second - box[j].first);
    }
    const Eigen::VectorXd f1 = model.fine(theta);
    const Eigen::VectorXd f0 = model.coarse(theta);
    CHECK(f1.size() == 6);
    CHECK(f0.size() == 6);
    CHECK(f1.allFinite());
    CHECK(f0.allFinite());
    // Same input twice gives the same output: the forwards are deterministic.
    CHECK((model.fine(theta) - f1).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("synthetic bi-fidelity outputs are strongly correlated") {
  SyntheticBiFidelityModel model;
  RngStream rng(4);
  const auto& box = model.prior_box();
  const int n = 5000;
  Eigen::MatrixXd f1(n, 6), f0(n, 6);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd theta(4);
    for (int j = 0; j < 4; ++j) {
      theta[j] = box[j].first + rng.uniform() * (box[j].second - box[j].first);
    }
    f1.row(i) = model.fine(theta);
    f0.row(i) = model.coarse(theta);
  }
  for (int c = 0; c < 6; ++c) {
    const Eigen::VectorXd a = f1.col(c).array() - f1.col(c).mean();
    const Eigen::VectorXd b = f0.col(c).array() - f0.col(c).mean();
    const double rho = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
    CHECK(rho > 0.8);
    CHECK(rho < 1.0);
  }
}
