// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "magpha/model.hpp"

namespace {

using namespace magpha;

// one full deployment-mode feedback pass at desk dimensions
void BM_ForwardDeskScale(benchmark::State& state) {
  FrameworkConfig fw;
  fw.q_t = 8;
  fw.q_f = 6;
  fw.q_l = 2;
  fw.n_b = 32;
  fw.seed = 5;
  DualNetModel model = build_model(fw);
  model.input_scale = 4.0;

  SeededRng rng(6);
  ComplexMatrix m(8, 32);
  RealMatrix ul(8, 32);
  for (int64_t i = 0; i < 256; ++i) {
    m(i / 32, i % 32) = std::complex<double>(rng.uniform(-1, 1), rng.uniform(-1, 1));
    ul(i / 32, i % 32) = rng.uniform(0, 1);
  }
  AngleDelayCsi h(m, 6, 2);
  MagnitudeMatrix ul_mag(ul);
  for (auto _ : state) {
    ForwardOutput out = forward(model, h, ul_mag, QuantizerMode::Deployment);
    benchmark::DoNotOptimize(out.estimate.entries.data());
  }
}
BENCHMARK(BM_ForwardDeskScale);

}  // namespace
