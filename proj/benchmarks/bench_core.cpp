// Microbenchmarks for the hot paths: energy scalarization, surrogate
// evaluation, the forward rollout, and one training step.

#include <benchmark/benchmark.h>

#include <vector>

#include "trajnas/energy.hpp"
#include "trajnas/forecaster.hpp"
#include "trajnas/genome.hpp"
#include "trajnas/surrogate.hpp"
#include "trajnas/synthdata.hpp"

namespace {

using namespace trajnas;

void BM_Energy(benchmark::State& state) {
  CandidateMetrics m;
  m.latency_s = 0.022;
  m.map_f = 0.34;
  m.ade_m = 1.1;
  m.fde_m = 1.9;
  const EnergyWeights w;
  for (auto _ : state) {
    benchmark::DoNotOptimize(energy(m, w));
  }
}
BENCHMARK(BM_Energy);

void BM_SurrogateEvaluate(benchmark::State& state) {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const Genome g = random_genome(space, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(surrogate_evaluate(model, g));
  }
}
BENCHMARK(BM_SurrogateEvaluate);

void BM_Mutate(benchmark::State& state) {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome g = random_genome(space, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mutate(g, space, seed++));
  }
}
BENCHMARK(BM_Mutate);

void BM_ForwardRollout(benchmark::State& state) {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome g = random_genome(space, static_cast<std::uint64_t>(
                                            state.range(0)));
  const ModelInstance model = instantiate(g, space, ModelShape{}, 7);
  std::vector<Pose> history;
  for (int i = 0; i < model.plan.shape.history_len; ++i) {
    Pose p;
    p.x = 2.0 + 1.5 * i;
    p.y = -1.0 + 0.5 * i;
    p.heading = 0.3;
    p.z = 0.4;
    history.push_back(p);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        forward_rollout(model, history, 0.5, kCostModelHorizon));
  }
}
BENCHMARK(BM_ForwardRollout)->Arg(1)->Arg(2)->Arg(3);

void BM_TrainEpoch(benchmark::State& state) {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome g = deserialize(
      "desk:1,0,0,0,2,1,1,1,1,1,1,1,1,1,1,0,0,0,0,0,0", space);
  DatasetConfig dc;
  dc.train_scenes = 4;
  dc.val_scenes = 1;
  dc.agents_per_scene = 4;
  const Dataset dataset = generate_dataset(dc);
  TrainConfig tc;
  tc.epochs = 1;
  for (auto _ : state) {
    state.PauseTiming();
    ModelInstance model = instantiate(g, space, ModelShape{}, 3);
    state.ResumeTiming();
    benchmark::DoNotOptimize(train(model, dataset.splits.train, tc));
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
