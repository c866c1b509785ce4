#include <benchmark/benchmark.h>

#include "metashift/dqn.hpp"
#include "metashift/scenario.hpp"
#include "metashift/shift_metrics.hpp"

using namespace metashift;

namespace {

Observation busy_obs(const IntersectionConfig& c) {
  Observation o;
  o.queue_counts = {12, 3, 0, 7, 22, 1, 5, 9};
  o.green_flags.assign(c.n_movements, 0.0);
  for (auto m : c.phases[1]) o.green_flags[m] = 1.0;
  o.phase_index = 1;
  return o;
}

void BM_EpisodeMaxPressure(benchmark::State& state) {
  IntersectionConfig c;
  const auto flow = make_training_set(synthetic_bases(), 1).scenarios[0];
  for (auto _ : state) benchmark::DoNotOptimize(run_episode(c, flow, max_pressure_policy(c), 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(flow.arrivals.size()));
}
BENCHMARK(BM_EpisodeMaxPressure)->Unit(benchmark::kMillisecond);

void BM_EpisodeGreedyNetwork(benchmark::State& state) {
  IntersectionConfig c;
  const auto flow = make_training_set(synthetic_bases(), 1).scenarios[0];
  const auto policy = greedy_policy(init_params(NetworkDims{}, 1), c);
  for (auto _ : state) benchmark::DoNotOptimize(run_episode(c, flow, policy, 1));
}
BENCHMARK(BM_EpisodeGreedyNetwork)->Unit(benchmark::kMillisecond);

void BM_FrapForward(benchmark::State& state) {
  IntersectionConfig c;
  const auto params = init_params(NetworkDims{}, 1);
  const auto obs = busy_obs(c);
  for (auto _ : state) benchmark::DoNotOptimize(frap_forward(params, obs, c));
}
BENCHMARK(BM_FrapForward);

void BM_BellmanGrads(benchmark::State& state) {
  IntersectionConfig c;
  const auto params = init_params(NetworkDims{}, 1);
  const auto obs = busy_obs(c);
  const std::vector<Transition> batch(static_cast<std::size_t>(state.range(0)), Transition{obs, 2, -0.3, obs});
  for (auto _ : state) benchmark::DoNotOptimize(bellman_grads(params, batch, params, 0.8, c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BellmanGrads)->Arg(1)->Arg(32);

void BM_KlDistance(benchmark::State& state) {
  const auto set = make_training_set(synthetic_bases(), 1);
  const auto p = average_training_distribution(set, 8);
  const auto q = movement_distribution(set.scenarios[7], 8);
  for (auto _ : state) benchmark::DoNotOptimize(kl_distance(p, q));
}
BENCHMARK(BM_KlDistance);

}  // namespace

BENCHMARK_MAIN();
