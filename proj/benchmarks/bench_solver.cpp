#include <benchmark/benchmark.h>

#include "psfunmix/experiment.hpp"
#include "psfunmix/solver.hpp"

using namespace psfunmix;

namespace {

ExperimentSetup narrow_lines() {
  ExperimentSetup s{lorentz_family(), make_grid(0.05, 5001), interleaved_support({10, 5}, 1e-3), {}};
  s.truth.theta = Vector(2);
  s.truth.theta << 2e-5, 1e-3;
  s.truth.eta = uniform_amplitudes(s.support);
  return s;
}

void BM_Hessian(benchmark::State& state) {
  const auto s = narrow_lines();
  const auto problem = s.problem();
  MixtureParams p = s.truth;
  p.theta *= 1.05;
  for (auto _ : state) benchmark::DoNotOptimize(hessian(problem, p));
}
BENCHMARK(BM_Hessian)->Unit(benchmark::kMicrosecond);

void BM_LevenbergMarquardt(benchmark::State& state) {
  const auto s = narrow_lines();
  const auto problem = s.problem();
  MixtureParams init = s.truth;
  init.theta[0] *= 1.05;
  init.theta[1] *= 0.95;
  SolveConfig cfg;
  cfg.record_params = false;
  for (auto _ : state) benchmark::DoNotOptimize(solve(problem, init, cfg));
}
BENCHMARK(BM_LevenbergMarquardt)->Unit(benchmark::kMillisecond);

void BM_MonteCarloBin(benchmark::State& state) {
  const auto s = narrow_lines();
  MonteCarloOptions o;
  o.trials = 10;
  o.distances = {1e-4};
  o.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo(s, o));
}
BENCHMARK(BM_MonteCarloBin)->Unit(benchmark::kMillisecond);

}  // namespace
