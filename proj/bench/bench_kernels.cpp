// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "dalign/kernels.hpp"
#include "dalign/rng.hpp"

namespace {

using dalign::Tensor;

Tensor samples(std::size_t rows, std::uint64_t seed) {
  dalign::Rng rng(seed);
  Tensor t({rows, 2});
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

template <double (*Kernel)(const Tensor&, const Tensor&, double)>
void BM_rbf(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = samples(n, 1), b = samples(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b, 0.7));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <double (*Kernel)(const Tensor&, const Tensor&)>
void BM_distance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = samples(n, 1), b = samples(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <std::vector<double> (*Kernel)(const Tensor&, const Tensor&)>
void BM_pooled(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = samples(n, 1), b = samples(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * (2 * n - 1) / 2));
}

namespace k = dalign::kernels;

BENCHMARK(BM_rbf<k::serial::rbf_sum>)->Name("rbf_sum/serial")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_rbf<k::parallel::rbf_sum>)->Name("rbf_sum/parallel")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_distance<k::serial::distance_sum>)->Name("distance_sum/serial")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_distance<k::parallel::distance_sum>)->Name("distance_sum/parallel")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_pooled<k::serial::pooled_distances>)->Name("pooled_distances/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_pooled<k::parallel::pooled_distances>)->Name("pooled_distances/parallel")->RangeMultiplier(4)->Range(64, 1024);

}  // namespace

BENCHMARK_MAIN();
