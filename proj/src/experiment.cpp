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

#include "tmsynce/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tmsynce/errors.hpp"
#include "tmsynce/transport.hpp"
#include "tmsynce/triangular.hpp"

namespace tmsynce {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

struct MapSpec {
  enum Kind { kAnalytical, kIdentity, kTriangular } kind;
  int order = 0;
};

MapSpec parse_map_spec(const std::string& s, const std::string& key) {
  if (s == "analytical") return {MapSpec::kAnalytical, 0};
  if (s == "identity") return {MapSpec::kIdentity, 0};
  if (s.rfind("triangular-", 0) == 0) {
    const std::string tail = s.substr(11);
    try {
      const int order = std::stoi(tail);
      if (order >= 1 && order <= 15 && tail == std::to_string(order)) {
        return {MapSpec::kTriangular, order};
      }
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(key + ": unrecognized map spec '" + s +
                    "' (expected analytical | identity | triangular-N)");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": wrong type");
  }
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& scope) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError("unknown config key '" + scope + item.key() + "'");
    }
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(
      j,
      {"problem", "method", "label", "fine_map", "coarse_map", "configuration", "omega",
       "iterations", "burn_in", "retrain_period", "repetitions", "seed", "output_dir",
       "reference_cov_scale", "adaptation", "cost_ratio", "eps2", "coarse_only_iterations"},
      "");

  ExperimentConfig c;
  if (!j.contains("problem")) throw ConfigError("problem: required key missing");
  c.problem = j.at("problem").get<std::string>();
  if (c.problem != "banana-quartic" && c.problem != "synthetic-bifidelity") {
    throw ConfigError("problem: must be banana-quartic or synthetic-bifidelity");
  }
  c.method = get_or<std::string>(j, "method", c.method);
  if (c.method != "tm-synce" && c.method != "no-map-synce") {
    throw ConfigError("method: must be tm-synce or no-map-synce");
  }
  c.fine_map = get_or<std::string>(j, "fine_map",
                                   c.method == "no-map-synce" ? "identity" : c.fine_map);
  c.coarse_map = get_or<std::string>(j, "coarse_map",
                                     c.method == "no-map-synce" ? "identity" : c.coarse_map);
  parse_map_spec(c.fine_map, "fine_map");
  parse_map_spec(c.coarse_map, "coarse_map");
  if (c.method == "no-map-synce" && (c.fine_map != "identity" || c.coarse_map != "identity")) {
    throw ConfigError("no-map-synce requires identity maps on both levels");
  }
  c.configuration = get_or<std::string>(j, "configuration", c.configuration);
  if (c.configuration != "direct" && c.configuration != "deep") {
    throw ConfigError("configuration: must be direct or deep");
  }
  c.label = get_or<std::string>(j, "label", std::string());
  c.omega = get_or<double>(j, "omega", c.omega);
  if (!(c.omega >= 0.0 && c.omega <= 1.0)) throw ConfigError("omega: must be in [0, 1]");
  c.iterations = get_or<long>(j, "iterations", c.iterations);
  if (c.iterations <= 0) throw ConfigError("iterations: must be positive");
  c.burn_in = get_or<long>(j, "burn_in", c.burn_in);
  if (c.burn_in < 0 || c.burn_in >= c.iterations) {
    throw ConfigError("burn_in: must satisfy 0 <= burn_in < iterations");
  }
  c.retrain_period = get_or<int>(j, "retrain_period", c.retrain_period);
  if (c.retrain_period < 0) throw ConfigError("retrain_period: must be >= 0");
  c.repetitions = get_or<int>(j, "repetitions", c.repetitions);
  if (c.repetitions < 1) throw ConfigError("repetitions: must be >= 1");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
  c.reference_cov_scale = get_or<double>(j, "reference_cov_scale", c.reference_cov_scale);
  if (c.reference_cov_scale < 0.0) throw ConfigError("reference_cov_scale: must be >= 0");
  if (j.contains("adaptation")) {
    const json& a = j.at("adaptation");
    if (!a.is_object()) throw ConfigError("adaptation: must be an object");
    reject_unknown_keys(a, {"enabled", "epoch_length", "warmup", "epsilon"}, "adaptation.");
    c.adaptation.enabled = get_or<bool>(a, "enabled", c.adaptation.enabled);
    c.adaptation.epoch_length = get_or<int>(a, "epoch_length", c.adaptation.epoch_length);
    c.adaptation.warmup = get_or<int>(a, "warmup", c.adaptation.warmup);
    c.adaptation.epsilon = get_or<double>(a, "epsilon", c.adaptation.epsilon);
    if (c.adaptation.epoch_length <= 0) throw ConfigError("adaptation.epoch_length: must be > 0");
    if (c.adaptation.epsilon <= 0.0) throw ConfigError("adaptation.epsilon: must be > 0");
  }
  c.cost_ratio = get_or<double>(j, "cost_ratio", c.cost_ratio);
  if (c.cost_ratio <= 0.0) throw ConfigError("cost_ratio: must be > 0");
  c.eps2 = get_or<double>(j, "eps2", c.eps2);
  if (c.eps2 <= 0.0) throw ConfigError("eps2: must be > 0");
  c.coarse_only_iterations = get_or<long>(j, "coarse_only_iterations", c.coarse_only_iterations);
  if (c.coarse_only_iterations < 0) throw ConfigError("coarse_only_iterations: must be >= 0");
  if (c.problem == "synthetic-bifidelity" && c.fine_map == "analytical") {
    throw ConfigError("fine_map: no analytical map exists for synthetic-bifidelity");
  }
  if (c.problem == "synthetic-bifidelity" && c.coarse_map == "analytical") {
    throw ConfigError("coarse_map: no analytical map exists for synthetic-bifidelity");
  }
  if (c.label.empty()) {
    const MapSpec fm = parse_map_spec(c.fine_map, "fine_map");
    std::string family = c.method == "no-map-synce"   ? "no-map"
                         : fm.kind == MapSpec::kAnalytical ? "tm-true"
                         : fm.kind == MapSpec::kTriangular ? "tm-lt"
                                                           : "tm-identity";
    c.label = family + "-" + c.configuration;
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_canonical(const ExperimentConfig& c) {
  json j;
  j["problem"] = c.problem;
  j["method"] = c.method;
  j["label"] = c.label;
  j["fine_map"] = c.fine_map;
  j["coarse_map"] = c.coarse_map;
  j["configuration"] = c.configuration;
  j["omega"] = c.omega;
  j["iterations"] = c.iterations;
  j["burn_in"] = c.burn_in;
  j["retrain_period"] = c.retrain_period;
  j["repetitions"] = c.repetitions;
  j["seed"] = c.seed;
  j["reference_cov_scale"] = c.reference_cov_scale;
  j["adaptation"] = {{"enabled", c.adaptation.enabled},
                     {"epoch_length", c.adaptation.epoch_length},
                     {"warmup", c.adaptation.warmup},
                     {"epsilon", c.adaptation.epsilon}};
  j["cost_ratio"] = c.cost_ratio;
  j["eps2"] = c.eps2;
  j["coarse_only_iterations"] = c.coarse_only_iterations;
  // output_dir intentionally excluded: moving artifacts must not change the hash
  return j.dump();
}

std::string config_hash(const ExperimentConfig& c) {
  const std::string s = config_canonical(c);
  std::uint64_t h = 1469598103934665603ull;
  for (const char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string artifact_header(const ExperimentConfig& c) {
  return "# tmsynce schema=" + std::to_string(kArtifactSchemaVersion) +
         " config_hash=" + config_hash(c) + " master_seed=" + std::to_string(c.seed);
}

Problem make_problem(const ExperimentConfig& c) {
  Problem p;
  if (c.problem == "banana-quartic") {
    p.fine = std::make_shared<QuarticDensity>(4.0);
    p.coarse = std::make_shared<BananaDensity>(-4.0);
    p.dim = 2;
    p.init_fine = Eigen::Vector2d(4.0, 0.0);
    p.init_coarse = Eigen::Vector2d(-4.0, 0.0);
  } else {
    p.synthetic = std::make_shared<SyntheticBiFidelityModel>(0.9, c.cost_ratio);
    p.fine = p.synthetic->fine_posterior();
    p.coarse = p.synthetic->coarse_posterior();
    p.dim = p.synthetic->input_dim();
    p.init_fine = p.synthetic->nominal();
    p.init_coarse = p.synthetic->nominal();
  }
  return p;
}

CoupledMaps make_maps(const ExperimentConfig& c, const Problem& p) {
  const MapSpec fine = parse_map_spec(c.fine_map, "fine_map");
  const MapSpec coarse = parse_map_spec(c.coarse_map, "coarse_map");
  const bool deep = c.configuration == "deep";
  CoupledMaps maps;
  maps.deep = deep;

  switch (coarse.kind) {
    case MapSpec::kAnalytical:
      maps.coarse = std::make_shared<AnalyticalBananaMap>(-4.0);
      break;
    case MapSpec::kIdentity:
      maps.coarse = std::make_shared<IdentityMap>(p.dim);
      break;
    case MapSpec::kTriangular:
      maps.coarse_trainable = std::make_shared<MonotoneTriangularMap>(p.dim, coarse.order);
      maps.coarse = maps.coarse_trainable;
      break;
  }
  switch (fine.kind) {
    case MapSpec::kAnalytical:
      if (deep) {
        maps.fine = std::make_shared<AnalyticalQuarticToBananaMap>(-4.0, 4.0);
      } else {
        maps.fine = std::make_shared<AnalyticalQuarticMap>(4.0);
      }
      break;
    case MapSpec::kIdentity:
      maps.fine = std::make_shared<IdentityMap>(p.dim);
      break;
    case MapSpec::kTriangular:
      maps.fine_trainable = std::make_shared<MonotoneTriangularMap>(p.dim, fine.order);
      maps.fine = maps.fine_trainable;
      break;
  }
  return maps;
}

Eigen::MatrixXd make_reference_cov(const ExperimentConfig& c, const Problem& p) {
  const int d = p.dim;
  if (c.reference_cov_scale > 0.0) {
    return c.reference_cov_scale * Eigen::MatrixXd::Identity(d, d);
  }
  if (c.method == "no-map-synce") {
    const LaplaceResult lap = laplace_approximation(*p.fine, p.init_fine);
    return (2.38 * 2.38 / static_cast<double>(d)) * lap.covariance;
  }
  return optimal_scaling_cov(d);
}

namespace {

// Pretrains a fresh triangular map on samples from the Laplace approximation
// of its target. Without this, targets whose scale is far from O(1) start
// with a hopeless identity map and the first retraining pass sees a stuck
// chain. Returns null when the approximation or training is unusable; the
// map then starts fresh as before.
std::shared_ptr<MonotoneTriangularMap> pretrain_on_laplace(int dim, int order,
                                                           const TargetDensity& target,
                                                           const Eigen::VectorXd& init,
                                                           std::uint64_t master_seed,
                                                           std::uint64_t stream_index) {
  try {
    const LaplaceResult lap = laplace_approximation(target, init);
    // An identity start is adequate when the target scales are already
    // O(1); chain samples then make better training data than a Gaussian
    // fit. Pretrain only on a gross scale mismatch.
    const Eigen::VectorXd sd = lap.covariance.diagonal().cwiseSqrt();
    if ((sd.array() > 0.1).all() && (sd.array() < 10.0).all()) return nullptr;
    const Eigen::LLT<Eigen::MatrixXd> llt(lap.covariance);
    if (llt.info() != Eigen::Success) return nullptr;
    RngStream rng = RngStream::for_chain(master_seed, stream_index);
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(4000);
    for (int i = 0; i < 4000; ++i) {
      samples.push_back(lap.mode + llt.matrixL() * rng.normal_vector(dim));
    }
    auto map = std::make_shared<MonotoneTriangularMap>(dim, order);
    const StandardNormalDensity ref(dim);
    MapTrainer trainer;
    trainer.train(*map, samples, ref);
    return map;
  } catch (const std::exception&) {
    return nullptr;
  }
}

std::vector<Eigen::VectorXd> post_burnin_rows(const Eigen::MatrixXd& samples, long burn_in) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<size_t>(samples.rows() - burn_in));
  for (long i = burn_in; i < samples.rows(); ++i) out.push_back(samples.row(i));
  return out;
}

ChainDiagnostics compute_chain_diagnostics(const CoupledRunResult& run, long burn_in,
                                           const TargetDensity& fine_target,
                                           const TransportMap* fine_map) {
  const long n = run.fine_samples.rows();
  const long n_post = n - burn_in;
  const int d = static_cast<int>(run.fine_samples.cols());
  ChainDiagnostics out;
  out.rho_per_dim.resize(d);
  out.tau_per_dim.resize(d);
  out.ess_per_dim.resize(d);
  out.wall_seconds = run.wall_seconds;
  const Eigen::MatrixXd fine_post = run.fine_samples.bottomRows(n_post);
  const Eigen::MatrixXd coarse_post = run.coarse_samples.bottomRows(n_post);
  for (int k = 0; k < d; ++k) {
    try {
      out.rho_per_dim[k] = pearson(fine_post.col(k), coarse_post.col(k));
    } catch (const std::exception&) {
      out.rho_per_dim[k] = std::numeric_limits<double>::quiet_NaN();
    }
    try {
      const EssResult e = ess(fine_post.col(k));
      out.tau_per_dim[k] = e.tau;
      out.ess_per_dim[k] = e.ess;
      out.iat_warning = out.iat_warning || e.warning;
    } catch (const std::exception&) {
      out.tau_per_dim[k] = static_cast<double>(n_post);
      out.ess_per_dim[k] = 1.0;
      out.iat_warning = true;
    }
  }
  if (fine_map != nullptr) {
    const StandardNormalDensity ref(d);
    try {
      const VarianceDiagnostic v =
          variance_diagnostic(*fine_map, fine_target, post_burnin_rows(run.fine_samples, burn_in),
                              ref);
      out.sigma2_m = v.sigma2;
    } catch (const std::exception&) {
      out.sigma2_m.reset();
    }
  }
  return out;
}

double safe_ess(const Eigen::VectorXd& series) {
  try {
    return ess(series).ess;
  } catch (const std::exception&) {
    return 1.0;
  }
}

double column_variance(const Eigen::VectorXd& col) {
  const double mean = col.mean();
  return (col.array() - mean).square().sum() / static_cast<double>(col.size() - 1);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c, int workers) {
  ExperimentResult out;
  out.config = c;
  out.hash = config_hash(c);
  const Problem p = make_problem(c);
  const Eigen::MatrixXd ref_cov = make_reference_cov(c, p);

  // Shared starting point for every repetition's trainable maps. Deep fine
  // maps train against the coarse pullback, not the reference, so they are
  // left fresh.
  const MapSpec fine_spec = parse_map_spec(c.fine_map, "fine_map");
  const MapSpec coarse_spec = parse_map_spec(c.coarse_map, "coarse_map");
  std::shared_ptr<MonotoneTriangularMap> pre_fine, pre_coarse;
  if (coarse_spec.kind == MapSpec::kTriangular) {
    pre_coarse = pretrain_on_laplace(p.dim, coarse_spec.order, *p.coarse, p.init_coarse, c.seed,
                                     (1ull << 22) + 1);
  }
  if (fine_spec.kind == MapSpec::kTriangular && c.configuration != "deep") {
    pre_fine = pretrain_on_laplace(p.dim, fine_spec.order, *p.fine, p.init_fine, c.seed,
                                   (1ull << 22) + 0);
  }

  out.reps.resize(static_cast<size_t>(c.repetitions));
  std::vector<std::string> errors(static_cast<size_t>(c.repetitions));
  if (workers < 1) workers = 1;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(workers)
#endif
  for (int r = 0; r < c.repetitions; ++r) {
    try {
      CoupledMaps maps = make_maps(c, p);
      if (maps.fine_trainable && pre_fine) {
        *maps.fine_trainable = *pre_fine;
        maps.fine_pretrained = true;
      }
      if (maps.coarse_trainable && pre_coarse) {
        *maps.coarse_trainable = *pre_coarse;
        maps.coarse_pretrained = true;
      }
      MapTrainer trainer;
      trainer.retrain_period = c.retrain_period;
      RngStream rng = RngStream::for_chain(c.seed, static_cast<std::uint64_t>(r));
      ProposalConfig prop;
      prop.reference_cov = ref_cov;
      prop.omega = c.omega;
      prop.adaptation = c.adaptation;
      RunConfig rc;
      rc.total_iterations = c.iterations;
      rc.burn_in = c.burn_in;
      rc.retrain_period = c.retrain_period;
      rc.repetitions = c.repetitions;
      rc.master_seed = c.seed;

      RepetitionResult rep;
      rep.run = run_coupled(*p.fine, *p.coarse, maps, &trainer, rc, prop, p.init_fine,
                            p.init_coarse, rng);
      std::shared_ptr<TransportMap> fine_eff =
          maps.deep ? std::make_shared<ComposedMap>(maps.coarse, maps.fine) : maps.fine;
      const TransportMap* diag_map = c.method == "no-map-synce" ? nullptr : fine_eff.get();
      rep.diag = compute_chain_diagnostics(rep.run, c.burn_in, *p.fine, diag_map);
      if (maps.fine_trainable) rep.fine_map_json = maps.fine_trainable->to_json();
      if (maps.coarse_trainable) rep.coarse_map_json = maps.coarse_trainable->to_json();
      out.reps[static_cast<size_t>(r)] = std::move(rep);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(r)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error("repetition failed: " + e);
  }

  std::vector<ChainDiagnostics> diags;
  diags.reserve(out.reps.size());
  for (const auto& rep : out.reps) diags.push_back(rep.diag);
  out.report = summarize(diags, c.label, c.omega);

  if (p.synthetic) {
    const auto& model = *p.synthetic;
    const long n_post = c.iterations - c.burn_in;
    const long total = n_post * c.repetitions;
    const int m = model.output_dim();
    Eigen::MatrixXd q1(total, m), q0(total, m);
    long row = 0;
    for (const auto& rep : out.reps) {
      for (long i = c.burn_in; i < c.iterations; ++i) {
        q1.row(row) = model.fine(rep.run.fine_samples.row(i));
        q0.row(row) = model.coarse(rep.run.coarse_samples.row(i));
        ++row;
      }
    }
    const CoupledStats stats = coupled_statistics(q1, q0);
    const double c1 = 1.0, c0 = model.cost_ratio();
    out.allocation = optimal_allocation(stats.v0_trace, stats.v1_trace, c0, c1, c.eps2);
    out.variance_ratios = variance_ratio(stats, c0, c1);

    if (c.coarse_only_iterations > 0) {
      const long n0 = c.coarse_only_iterations;
      const long b0 = n0 / 5;
      RngStream rng0 = RngStream::for_chain(c.seed, 1ull << 20);
      const IdentityMap id(p.dim);
      ProposalConfig prop0;
      const LaplaceResult lap = laplace_approximation(*p.coarse, p.init_coarse);
      prop0.reference_cov = (2.38 * 2.38 / p.dim) * lap.covariance;
      prop0.omega = 0.0;
      const SingleRunResult run0 =
          run_single(*p.coarse, id, n0, b0, prop0, p.init_coarse, rng0);
      const long kept0 = n0 - b0;
      Eigen::MatrixXd q_only(kept0, m);
      for (long i = 0; i < kept0; ++i) {
        q_only.row(i) = model.coarse(run0.samples.row(b0 + i));
      }
      out.mlmc_mean = mlmc_estimate(q_only, q1, q0);
      out.mlmc_se.resize(m);
      const Eigen::MatrixXd diff = q1 - q0;
      for (int k = 0; k < m; ++k) {
        const double v_only = column_variance(q_only.col(k));
        const double ess_only = safe_ess(q_only.col(k));
        double ess_diff = 0.0;
        for (int r = 0; r < c.repetitions; ++r) {
          ess_diff += safe_ess(diff.col(k).segment(r * n_post, n_post));
        }
        const double v_diff = column_variance(diff.col(k));
        out.mlmc_se[k] = std::sqrt(v_only / ess_only + v_diff / std::max(1.0, ess_diff));
      }
    }
  }
  return out;
}

namespace {

constexpr const char* kReportColumns =
    "method,omega,rho_min,tau_max,ESS,time,ESS_per_sec,rel_rho_min,rel_ESS_per_sec";

std::string report_row_csv(const DiagnosticsReport& r) {
  std::string row = r.method + "," + format_double(r.omega) + "," + format_double(r.rho_min) +
                    "," + format_double(r.tau_max) + "," + format_double(r.ess_min) + "," +
                    format_double(r.wall_seconds) + "," + format_double(r.ess_per_sec) + ",";
  if (r.rel_rho_min) row += format_double(*r.rel_rho_min);
  row += ",";
  if (r.rel_ess_per_sec) row += format_double(*r.rel_ess_per_sec);
  return row;
}

json report_to_json(const DiagnosticsReport& r) {
  json j;
  j["method"] = r.method;
  j["omega"] = r.omega;
  j["rho_min"] = r.rho_min;
  j["tau_max"] = r.tau_max;
  j["ESS"] = r.ess_min;
  j["time"] = r.wall_seconds;
  j["ESS_per_sec"] = r.ess_per_sec;
  if (r.sigma2_m) j["sigma2_m"] = *r.sigma2_m;
  if (r.kl_m) j["kl_m"] = *r.kl_m;
  j["iat_warning"] = r.iat_warning;
  return j;
}

DiagnosticsReport report_from_json(const json& j) {
  DiagnosticsReport r;
  r.method = j.at("method").get<std::string>();
  r.omega = j.at("omega").get<double>();
  r.rho_min = j.at("rho_min").get<double>();
  r.tau_max = j.at("tau_max").get<double>();
  r.ess_min = j.at("ESS").get<double>();
  r.wall_seconds = j.at("time").get<double>();
  r.ess_per_sec = j.at("ESS_per_sec").get<double>();
  if (j.contains("sigma2_m")) r.sigma2_m = j.at("sigma2_m").get<double>();
  if (j.contains("kl_m")) r.kl_m = j.at("kl_m").get<double>();
  r.iat_warning = get_or<bool>(j, "iat_warning", false);
  return r;
}

std::string sanitize_label(const std::string& label) {
  std::string out;
  for (const char ch : label) {
    out += (std::isalnum(static_cast<unsigned char>(ch)) != 0) ? ch : '-';
  }
  return out;
}

void write_autocorr_series(const ExperimentResult& r, const std::string& path) {
  const CoupledRunResult& run = r.reps.front().run;
  const long n_post = r.config.iterations - r.config.burn_in;
  const int d = static_cast<int>(run.fine_samples.cols());
  const int max_lag = static_cast<int>(std::min<long>(200, n_post / 4));
  if (max_lag < 1) return;
  std::ofstream out(path, std::ios::binary);
  out << artifact_header(r.config) << "\n";
  out << "lag";
  for (int k = 0; k < d; ++k) out << ",dim_" << (k + 1);
  out << "\n";
  std::vector<Eigen::VectorXd> acf(static_cast<size_t>(d));
  for (int k = 0; k < d; ++k) {
    try {
      acf[static_cast<size_t>(k)] =
          autocorrelation(run.fine_samples.col(k).tail(n_post), max_lag);
    } catch (const std::exception&) {
      acf[static_cast<size_t>(k)] = Eigen::VectorXd::Zero(max_lag + 1);
    }
  }
  for (int lag = 0; lag <= max_lag; ++lag) {
    out << lag;
    for (int k = 0; k < d; ++k) out << "," << format_double(acf[static_cast<size_t>(k)][lag]);
    out << "\n";
  }
}

}  // namespace

void write_artifacts(const ExperimentResult& r, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::string header = artifact_header(r.config);
  const int d = static_cast<int>(r.reps.front().run.fine_samples.cols());

  for (size_t rep = 0; rep < r.reps.size(); ++rep) {
    const CoupledRunResult& run = r.reps[rep].run;
    std::ofstream out(out_dir + "/chain_" + std::to_string(rep) + ".csv", std::ios::binary);
    out << header << "\n";
    out << "iteration,chain,level";
    for (int k = 0; k < d; ++k) out << ",theta_" << (k + 1);
    out << ",log_pdf,accepted,branch,burnin_flag\n";
    const long n = run.fine_samples.rows();
    for (long i = 0; i < n; ++i) {
      const size_t k = static_cast<size_t>(i);
      for (int level = 1; level >= 0; --level) {
        const Eigen::MatrixXd& s = level == 1 ? run.fine_samples : run.coarse_samples;
        const double lp = level == 1 ? run.fine_log_pdf[k] : run.coarse_log_pdf[k];
        const int acc = level == 1 ? run.fine_accepted[k] : run.coarse_accepted[k];
        out << (i + 1) << "," << rep << "," << level;
        for (int c0 = 0; c0 < d; ++c0) out << "," << format_double(s(i, c0));
        out << "," << format_double(lp) << "," << acc << ","
            << static_cast<int>(run.independent_branch[k]) << ","
            << static_cast<int>(run.burnin[k]) << "\n";
      }
    }
  }

  {
    std::ofstream out(out_dir + "/diagnostics.csv", std::ios::binary);
    out << header << "\n" << kReportColumns << "\n" << report_row_csv(r.report) << "\n";
  }
  {
    json j;
    j["schema"] = kArtifactSchemaVersion;
    j["config_hash"] = r.hash;
    j["master_seed"] = r.config.seed;
    j["config"] = json::parse(config_canonical(r.config));
    j["report"] = report_to_json(r.report);
    json chains = json::array();
    for (const auto& rep : r.reps) {
      json c;
      c["rho"] = std::vector<double>(rep.diag.rho_per_dim.begin(), rep.diag.rho_per_dim.end());
      c["tau"] = std::vector<double>(rep.diag.tau_per_dim.begin(), rep.diag.tau_per_dim.end());
      c["ess"] = std::vector<double>(rep.diag.ess_per_dim.begin(), rep.diag.ess_per_dim.end());
      c["time"] = rep.diag.wall_seconds;
      if (rep.diag.sigma2_m) c["sigma2_m"] = *rep.diag.sigma2_m;
      c["events"] = rep.run.events;
      c["inversion_failures"] = rep.run.inversion_failures;
      chains.push_back(std::move(c));
    }
    j["chains"] = std::move(chains);
    std::ofstream out(out_dir + "/diagnostics.json", std::ios::binary);
    out << j.dump(2) << "\n";
  }

  for (size_t rep = 0; rep < r.reps.size(); ++rep) {
    const auto& rr = r.reps[rep];
    const auto write_map = [&](const std::string& name, const std::string& text) {
      if (text.empty()) return;
      json j;
      j["schema"] = kArtifactSchemaVersion;
      j["config_hash"] = r.hash;
      j["master_seed"] = r.config.seed;
      j["map"] = json::parse(text);
      std::ofstream out(out_dir + "/" + name + "_rep" + std::to_string(rep) + ".json",
                        std::ios::binary);
      out << j.dump(2) << "\n";
    };
    write_map("map_fine", rr.fine_map_json);
    write_map("map_coarse", rr.coarse_map_json);
  }

  write_autocorr_series(r, out_dir + "/autocorr_rep0.csv");

  if (r.allocation) {
    const MlmcAllocation& a = *r.allocation;
    json j;
    j["schema"] = kArtifactSchemaVersion;
    j["config_hash"] = r.hash;
    j["master_seed"] = r.config.seed;
    j["v0_trace"] = a.v0_trace;
    j["v1_trace"] = a.v1_trace;
    j["c0"] = a.c0;
    j["c1"] = a.c1;
    j["eps2"] = a.eps2;
    j["n0_raw"] = a.n0_raw;
    j["n1_raw"] = a.n1_raw;
    j["n0"] = a.n0;
    j["n1"] = a.n1;
    j["total_cost"] = a.total_cost;
    j["optimal_variance"] = a.optimal_variance;
    if (a.n_eq) j["n_eq"] = *a.n_eq;
    j["classical_n0"] = a.classical_n0;
    j["classical_n1"] = a.classical_n1;
    j["classical_cost"] = a.classical_cost;
    j["variance_ratios"] =
        std::vector<double>(r.variance_ratios.begin(), r.variance_ratios.end());
    if (r.mlmc_mean.size() > 0) {
      j["mlmc_mean"] = std::vector<double>(r.mlmc_mean.begin(), r.mlmc_mean.end());
      j["mlmc_se"] = std::vector<double>(r.mlmc_se.begin(), r.mlmc_se.end());
    }
    std::ofstream out(out_dir + "/allocation.json", std::ios::binary);
    out << j.dump(2) << "\n";

    std::ofstream csv(out_dir + "/variance_ratio.csv", std::ios::binary);
    csv << header << "\ncomponent,ratio\n";
    for (int k = 0; k < r.variance_ratios.size(); ++k) {
      csv << (k + 1) << "," << format_double(r.variance_ratios[k]) << "\n";
    }
  }
}

MergedReport merge_reports(const std::vector<std::string>& run_dirs,
                           const std::string& baseline_label) {
  MergedReport merged;
  for (const auto& dir : run_dirs) {
    const std::string path = dir + "/diagnostics.json";
    std::ifstream in(path);
    if (!in) {
      merged.skipped.push_back(path + ": missing");
      continue;
    }
    json j;
    try {
      in >> j;
      if (j.at("schema").get<int>() != kArtifactSchemaVersion) {
        merged.skipped.push_back(path + ": schema version mismatch");
        continue;
      }
      merged.rows.push_back(report_from_json(j.at("report")));
      merged.run_dirs.push_back(dir);
    } catch (const std::exception& e) {
      merged.skipped.push_back(path + ": " + e.what());
    }
  }
  if (!baseline_label.empty()) {
    const auto it = std::find_if(merged.rows.begin(), merged.rows.end(),
                                 [&](const DiagnosticsReport& r) {
                                   return r.method == baseline_label;
                                 });
    if (it != merged.rows.end()) {
      const DiagnosticsReport baseline = *it;
      for (auto& row : merged.rows) apply_baseline(row, baseline);
    }
  }
  return merged;
}

void write_report(const MergedReport& merged, const std::string& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/report.csv", std::ios::binary);
    out << kReportColumns << "\n";
    for (const auto& row : merged.rows) out << report_row_csv(row) << "\n";
  }
  for (size_t i = 0; i < merged.run_dirs.size(); ++i) {
    const std::string tag = sanitize_label(merged.rows[i].method);
    const std::pair<const char*, std::string> copies[] = {
        {"autocorr_rep0.csv", "autocorr_" + tag + ".csv"},
        {"variance_ratio.csv", "variance_ratio_" + tag + ".csv"}};
    for (const auto& [src, dst] : copies) {
      const fs::path from = fs::path(merged.run_dirs[i]) / src;
      if (fs::exists(from)) {
        fs::copy_file(from, fs::path(out_dir) / dst, fs::copy_options::overwrite_existing);
      }
    }
  }
}

std::string render_report_table(const std::vector<DiagnosticsReport>& rows) {
  std::ostringstream out;
  char line[256];
  out << "method               omega  rho_min   tau_max       ESS      time  ESS/s     "
         "rel_rho  rel_ESS/s\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-20s %5.2f  %7.3f  %8.1f  %8.1f  %8.2f  %9.2f",
                  r.method.c_str(), r.omega, r.rho_min, r.tau_max, r.ess_min, r.wall_seconds,
                  r.ess_per_sec);
    out << line;
    if (r.rel_rho_min && r.rel_ess_per_sec) {
      std::snprintf(line, sizeof(line), "  %7.2f  %9.2f", *r.rel_rho_min, *r.rel_ess_per_sec);
      out << line;
    }
    out << "\n";
  }
  return out.str();
}

std::string render_allocation(const MlmcAllocation& a) {
  std::ostringstream out;
  out << "inputs: V0=" << format_double(a.v0_trace) << " V1=" << format_double(a.v1_trace)
      << " C0=" << format_double(a.c0) << " C1=" << format_double(a.c1)
      << " eps2=" << format_double(a.eps2) << "\n";
  out << "allocation: N0=" << format_double(a.n0_raw) << " (" << a.n0
      << "), N1=" << format_double(a.n1_raw) << " (" << a.n1 << ")\n";
  out << "total cost: " << format_double(a.total_cost)
      << ", variance at allocation: " << format_double(a.optimal_variance) << "\n";
  if (a.n_eq) {
    out << "equivalent-cost fine-only samples: " << format_double(*a.n_eq) << "\n";
  } else {
    out << "equivalent-cost fine-only samples: undefined (C1 <= C0 leaves no cost gap)\n";
  }
  out << "classical cross-check: N0=" << format_double(a.classical_n0)
      << ", N1=" << format_double(a.classical_n1)
      << ", cost=" << format_double(a.classical_cost) << "\n";
  return out.str();
}

}  // namespace tmsynce
