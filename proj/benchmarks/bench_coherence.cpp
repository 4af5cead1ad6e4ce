#include <benchmark/benchmark.h>

#include "psfunmix/coherence.hpp"

using namespace psfunmix;

namespace {

void BM_DictionaryBuild(benchmark::State& state) {
  const auto fam = lorentz_family();
  const auto grid = make_grid(0.05, static_cast<int>(state.range(0)));
  const auto support = interleaved_support({10, 5}, 1e-3);
  Vector theta(2);
  theta << 2e-5, 1e-3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_dictionary(fam, grid, support, theta, 2));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 15 * 3);
}
BENCHMARK(BM_DictionaryBuild)->Arg(5001)->Arg(50001);

void BM_CoherenceMu(benchmark::State& state) {
  const auto fam = lorentz_family();
  const auto grid = make_grid(0.05, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(coherence_mu(fam, grid, 1, 0, 2e-5, 1e-3, 1e-3));
  }
}
BENCHMARK(BM_CoherenceMu)->Arg(5001)->Unit(benchmark::kMillisecond);

void BM_CoherenceFunction(benchmark::State& state) {
  const auto fam = lorentz_family();
  const auto grid = make_grid(0.05, 5001);
  const int a = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(coherence_function(fam, grid, a, a, 1e-3, 1e-3, 1e-3, true));
  }
}
BENCHMARK(BM_CoherenceFunction)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Interference(benchmark::State& state) {
  const auto fam = lorentz_family();
  for (auto _ : state) {
    benchmark::DoNotOptimize(interference(fam, 1, 2e-5, 1e-3));
  }
}
BENCHMARK(BM_Interference);

}  // namespace
