#include <benchmark/benchmark.h>

#include <vector>

#include "mmvlab/parallel.hpp"
#include "mmvlab/paths.hpp"
#include "mmvlab/rng.hpp"

using namespace mmvlab;

static void BM_NormalPair(benchmark::State& state) {
  const rng::StreamKey key{42, 0};
  std::uint64_t p = 0;
  for (auto _ : state) benchmark::DoNotOptimize(rng::normal_pair(key, p++, 3, 0));
}
BENCHMARK(BM_NormalPair);

static void BM_PathIncrements(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const PathBundle b(TimeGrid(1.0, 250), 1 << 20, dim, 7);
  std::vector<double> out(250 * dim);
  std::size_t p = 0;
  for (auto _ : state) {
    b.increments(p++, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 250 * dim);
}
BENCHMARK(BM_PathIncrements)->Arg(1)->Arg(2)->Arg(4);

static void BM_SimulateState(benchmark::State& state) {
  set_worker_count(1);
  const auto model = CoefficientModel::deterministic(DeterministicSpec{
      0.03, 0.0, Vec::Constant(1, 0.1), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1),
      Mat::Constant(1, 1, 0.2), Mat::Zero(1, 1)});
  const PathBundle b(TimeGrid(1.0, 250), static_cast<std::size_t>(state.range(0)), 1, 7);
  const ControlRule rule = [](const ControlInput& in) {
    return ControlDecision{Vec::Constant(1, 1.0 - 0.5 * in.x), 0.0};
  };
  for (auto _ : state) benchmark::DoNotOptimize(simulate_state(model, rule, b, 1.0).x.data());
  state.SetItemsProcessed(state.iterations() * state.range(0) * 250);
  set_worker_count(0);
}
BENCHMARK(BM_SimulateState)->Arg(4096)->Arg(32768)->Unit(benchmark::kMillisecond);
