// Parallel kernels vs the serial reference. Thread count follows OMP_NUM_THREADS / ARC_THREADS.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <cstdlib>
#include <random>

#include "arc/kernels.hpp"
#include "arc/layers.hpp"
#include "reference.hpp"

using namespace arc;

namespace {

// (C, T, H): shapes of the tiny model and of a resnet18 res3 layer at desk resolution.
void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({8, 8, 16})->Args({16, 8, 8})->Args({128, 4, 28});
}

template <class S>
void BM_conv_parallel(benchmark::State& st) {
  const std::size_t c = st.range(0), t = st.range(1), h = st.range(2);
  const auto x = random_tensor<S>(Shape{c, t, h, h}, 1);
  const auto k = random_tensor<S>(Shape{c, c, 3, 3}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d<S>(x, k, {}, 1));
  st.counters["MAC/s"] = benchmark::Counter(double(9 * c * c * t * h * h) * st.iterations(), benchmark::Counter::kIsRate);
}

template <class S>
void BM_conv_reference(benchmark::State& st) {
  const std::size_t c = st.range(0), t = st.range(1), h = st.range(2);
  const auto x = random_tensor<S>(Shape{c, t, h, h}, 1);
  const auto k = random_tensor<S>(Shape{c, c, 3, 3}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(reference::conv2d<S>(x, k));
  st.counters["MAC/s"] = benchmark::Counter(double(9 * c * c * t * h * h) * st.iterations(), benchmark::Counter::kIsRate);
}

void BM_project_parallel(benchmark::State& st) {
  const std::size_t c = st.range(0);
  const auto m = random_tensor<float>(Shape{c, c, 1, 1}, 3);
  const auto x = random_tensor<float>(Shape{c, 8, 16, 16}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::project(m, x));
}

void BM_project_reference(benchmark::State& st) {
  const std::size_t c = st.range(0);
  const auto m = random_tensor<float>(Shape{c, c, 1, 1}, 3);
  const auto x = random_tensor<float>(Shape{c, 8, 16, 16}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(reference::channel_project(m, x));
}

void BM_shift_parallel(benchmark::State& st) {
  const auto x = random_tensor<float>(Shape{64, 8, 28, 28}, 5);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::temporal_shift(x, 8, 1));
}

void BM_shift_reference(benchmark::State& st) {
  const auto x = random_tensor<float>(Shape{64, 8, 28, 28}, 5);
  for (auto _ : st) benchmark::DoNotOptimize(reference::temporal_shift(x, 8));
}

void BM_arc_layer_forward(benchmark::State& st) {
  ArcConfig cfg;
  cfg.n = st.range(0);
  KernelStack<float> k(16, 16, 3);
  std::mt19937_64 rng(6);
  fill_normal(k.tensor(), rng, 0.1);
  const auto p = ArcLayerParams<float>::from_feedforward(k, cfg);
  const auto x = random_tensor<float>(Shape{16, 8, 8, 8}, 7, 0.0, 1.0);
  for (auto _ : st) benchmark::DoNotOptimize(arc_layer_forward(x, p, cfg));
}

}  // namespace

BENCHMARK(BM_conv_parallel<float>)->Apply(conv_shapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_reference<float>)->Apply(conv_shapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_parallel<double>)->Apply(conv_shapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_reference<double>)->Apply(conv_shapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_project_parallel)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_project_reference)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_shift_parallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_shift_reference)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_arc_layer_forward)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

int main(int argc, char** argv) {
  if (const char* env = std::getenv("ARC_THREADS")) omp_set_num_threads(std::atoi(env));
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
