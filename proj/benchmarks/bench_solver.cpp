#include <benchmark/benchmark.h>

#include "mmvlab/bsde.hpp"
#include "mmvlab/control.hpp"
#include "mmvlab/parallel.hpp"

using namespace mmvlab;

namespace {

CoefficientModel vasicek() {
  FactorSpec f;
  f.kappa = 0.8;
  f.mean = 0.04;
  f.vol = Vec(2);
  f.vol << 0.015, 0.0;
  f.f0 = 0.03;
  Vec mu(2);
  mu << 0.08, 0.05;
  Mat sigma(2, 2);
  sigma << 0.2, 0.0, 0.05, 0.15;
  return CoefficientModel::markov_factor(f, mu, Vec::Zero(2), sigma);
}

CoefficientModel constant() {
  return CoefficientModel::deterministic(DeterministicSpec{
      0.03, 0.0, Vec::Constant(1, 0.1), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1),
      Mat::Constant(1, 1, 0.2), Mat::Zero(1, 1)});
}

}  // namespace

static void BM_SolveDeterministic(benchmark::State& state) {
  const auto model = constant();
  const PathBundle b(TimeGrid(1.0, static_cast<int>(state.range(0))), 16, 1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_bsde(model, b).h0(model));
}
BENCHMARK(BM_SolveDeterministic)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_SolveVasicekRegression(benchmark::State& state) {
  set_worker_count(1);
  const auto model = vasicek();
  const PathBundle b(TimeGrid(1.0, 50), static_cast<std::size_t>(state.range(0)), 2, 11);
  for (auto _ : state) {
    const BsdeSolution h = solve_h(model, b.grid(), b);
    benchmark::DoNotOptimize(solve_y(model, h, b).y0(model));
  }
  set_worker_count(0);
}
BENCHMARK(BM_SolveVasicekRegression)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

static void BM_VerifySaddle(benchmark::State& state) {
  set_worker_count(1);
  const auto model = constant();
  const PathBundle b(TimeGrid(1.0, 100), static_cast<std::size_t>(state.range(0)), 1, 7);
  const BsdeSolution sol = solve_bsde(model, b);
  const RobustSetup setup{&model, &sol, 1.0, 1.0, nullptr};
  for (auto _ : state) benchmark::DoNotOptimize(verify_saddle(setup, b).pass);
  set_worker_count(0);
}
BENCHMARK(BM_VerifySaddle)->Arg(2000)->Unit(benchmark::kMillisecond);
