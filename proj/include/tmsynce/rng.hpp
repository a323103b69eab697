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

#ifndef TMSYNCE_RNG_HPP
#define TMSYNCE_RNG_HPP

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace tmsynce {

/// Deterministic random stream with a logical draw counter.
///
/// Normals are produced by Box--Muller so the engine consumption pattern is
/// fixed and independent of the standard library implementation. The draw
/// counter tracks logical draws (one per uniform, one per normal), which is
/// what the samplers' per-iteration RNG budget is stated in.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for one chain of a multi-chain run.
  static RngStream for_chain(std::uint64_t master_seed, std::uint64_t chain_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(chain_index),
                      static_cast<std::uint32_t>(0x9e3779b9u)};
    RngStream s(0);
    s.engine_.seed(seq);
    return s;
  }

  /// U(0,1), strictly inside the open interval.
  double uniform() {
    ++draws_;
    return raw_uniform();
  }

  /// Standard normal draw.
  double normal() {
    ++draws_;
    if (spare_valid_) {
      spare_valid_ = false;
      return spare_;
    }
    const double u1 = raw_uniform();
    const double u2 = raw_uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * kPi * u2;
    spare_ = mag * std::sin(ang);
    spare_valid_ = true;
    return mag * std::cos(ang);
  }

  Eigen::VectorXd normal_vector(int d) {
    Eigen::VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = normal();
    return z;
  }

  std::uint64_t draw_count() const { return draws_; }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  double raw_uniform() {
    // 53-bit mantissa, shifted into (0,1).
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::mt19937_64 engine_;
  bool spare_valid_ = false;
  double spare_ = 0.0;
  std::uint64_t draws_ = 0;
};

}  // namespace tmsynce

#endif  // TMSYNCE_RNG_HPP
