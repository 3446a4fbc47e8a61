// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "magpha/csi.hpp"

namespace {

using namespace magpha;

void BM_GenerateChannelPair(benchmark::State& state) {
  ChannelModelConfig cfg;
  cfg.n_f = state.range(0);
  cfg.n_b = state.range(1);
  uint64_t stream = 0;
  for (auto _ : state) {
    SeededRng rng(mix_seed(7, stream++));
    CsiSamplePair pair = generate_channel_pair(cfg, rng);
    benchmark::DoNotOptimize(pair.downlink.entries.data());
  }
}
BENCHMARK(BM_GenerateChannelPair)->Args({64, 32})->Args({256, 64});

void BM_ToAngleDelay(benchmark::State& state) {
  ChannelModelConfig cfg;
  cfg.n_f = state.range(0);
  cfg.n_b = state.range(1);
  SeededRng rng(9);
  CsiSamplePair pair = generate_channel_pair(cfg, rng);
  const int64_t q_f = 3 * cfg.n_f / 32, q_l = cfg.n_f / 32;
  for (auto _ : state) {
    AngleDelayCsi ad = to_angle_delay(pair.downlink, q_f, q_l);
    benchmark::DoNotOptimize(ad.entries.data());
  }
}
BENCHMARK(BM_ToAngleDelay)->Args({64, 32})->Args({256, 64});

}  // namespace
