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

// Compares the serial reference loss kernel against the OpenMP one on a
// training-sized workload and reports the relative result difference.

#include <chrono>
#include <cstdio>

#include "tmsynce/model.hpp"
#include "tmsynce/rng.hpp"
#include "tmsynce/triangular.hpp"

using namespace tmsynce;

namespace {

template <typename F>
double time_best_of(int runs, const F& f) {
  double best = 1e300;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

}  // namespace

int main() {
  RngStream rng(20260826);
  const auto samples = sample_quartic(50000, rng);
  const StandardNormalDensity ref(2);
  MonotoneTriangularMap map(2, 4);

  LossResult serial_res, omp_res;
  const double t_serial = time_best_of(3, [&] {
    serial_res = kl_loss_and_grad_serial(map, samples, ref);
  });
  const double t_omp = time_best_of(3, [&] {
    omp_res = kl_loss_and_grad_omp(map, samples, ref);
  });

  const double rel =
      std::abs(serial_res.loss - omp_res.loss) / std::max(1.0, std::abs(serial_res.loss));
  std::printf("kl_loss_and_grad over %zu samples, %d parameters\n", samples.size(),
              map.num_parameters());
  std::printf("  serial: %8.4f s  loss=%.12g\n", t_serial, serial_res.loss);
  std::printf("  openmp: %8.4f s  loss=%.12g\n", t_omp, omp_res.loss);
  std::printf("  speedup: %.2fx, relative loss difference: %.3g\n", t_serial / t_omp, rel);
  return rel < 1e-10 ? 0 : 1;
}
