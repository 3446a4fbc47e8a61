// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "magpha/autodiff.hpp"
#include "magpha/rng.hpp"

namespace {

using namespace magpha;

Tensor randn(std::vector<int64_t> shape, uint64_t seed) {
  SeededRng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * 0.1;
  return t;
}

// desk-scale stage-2 shapes: batch 50 images of 8x32
void BM_CircularConvForward(benchmark::State& state) {
  const int64_t cin = state.range(0), cout = state.range(1);
  Tensor x = randn({50, cin, 8, 32}, 1);
  Tensor k = randn({cout, cin, 7, 7}, 2);
  Tensor b = randn({cout}, 3);
  for (auto _ : state) {
    Var y = circular_conv2d(Var::constant(x), Var::leaf(k, false), Var::leaf(b, false));
    benchmark::DoNotOptimize(y.value().data());
  }
  state.SetItemsProcessed(state.iterations() * 50 * 256 * 49 * cin * cout);
}
BENCHMARK(BM_CircularConvForward)->Args({1, 16})->Args({16, 8})->Args({8, 4})->Args({2, 16});

void BM_CircularConvTrainStep(benchmark::State& state) {
  const int64_t cin = state.range(0), cout = state.range(1);
  Tensor x = randn({50, cin, 8, 32}, 1);
  Var k = Var::leaf(randn({cout, cin, 7, 7}, 2), true);
  Var b = Var::leaf(randn({cout}, 3), true);
  for (auto _ : state) {
    Var in = Var::leaf(x, true);
    Var loss = sum(square(circular_conv2d(in, k, b)));
    backward(loss);
    k.clear_grad();
    b.clear_grad();
    benchmark::DoNotOptimize(loss.value()[0]);
  }
  state.SetItemsProcessed(state.iterations() * 3 * 50 * 256 * 49 * cin * cout);
}
BENCHMARK(BM_CircularConvTrainStep)->Args({16, 8})->Args({2, 16});

}  // namespace
