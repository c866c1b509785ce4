#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "metashift/dqn.hpp"
#include "metashift/error.hpp"
#include "metashift/intersection.hpp"
#include "metashift/scenario.hpp"
#include "support.hpp"

using namespace metashift;
using namespace metashift::testing;

namespace {

SimState empty_state(const IntersectionConfig& c) {
  return SimState(c, std::make_shared<const FlowSpec>(flow_of({})));
}

}  // namespace

TEST(Observe, EmptyStateShowsPhaseZeroFlags) {
  IntersectionConfig c;
  const auto obs = observe(empty_state(c), c);
  EXPECT_EQ(obs.queue_counts, std::vector<double>(8, 0.0));
  EXPECT_EQ(obs.green_flags, (std::vector<double>{1, 1, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(obs.phase_index, 0u);
}

TEST(Observe, CountsQueuesAndIsPure) {
  IntersectionConfig c;
  auto s = empty_state(c);
  s.seed_queue(0, 2);
  s.seed_queue(1, 3);
  const auto a = observe(s, c);
  EXPECT_EQ(a.queue_counts, (std::vector<double>{2, 3, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(a.green_flags, (std::vector<double>{1, 1, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(observe(s, c), a);
}

TEST(Observe, MovementCountMismatchIsConfigError) {
  IntersectionConfig c;
  auto s = empty_state(c);
  IntersectionConfig other;
  other.n_movements = 4;
  other.phases = {{0, 1}, {2, 3}};
  EXPECT_THROW(observe(s, other), ConfigError);
}

TEST(Step, GreenQueueOfFiveClearsInOneInterval) {
  IntersectionConfig c;
  auto s = empty_state(c);
  s.seed_queue(0, 5);
  auto [next, reward] = step(std::move(s), 0, c);
  EXPECT_EQ(next.queues()[0].size(), 0u);
  EXPECT_EQ(next.completed().size(), 5u);
  EXPECT_EQ(reward, 0.0);
  EXPECT_DOUBLE_EQ(next.clock(), 10.0);
}

TEST(Step, EmptyIntersectionAdvancesTenSeconds) {
  IntersectionConfig c;
  auto [next, reward] = step(empty_state(c), 0, c);
  EXPECT_EQ(reward, 0.0);
  EXPECT_DOUBLE_EQ(next.clock(), 10.0);
}

TEST(Step, RewardIsMinusEndOfIntervalQueue) {
  IntersectionConfig c;
  auto s = empty_state(c);
  s.seed_queue(0, 2);
  s.seed_queue(1, 3);
  // Serving phase 1 leaves movements 1 and 2 untouched.
  auto [next, reward] = step(std::move(s), 1, c);
  EXPECT_EQ(reward, -5.0);
  EXPECT_EQ(next.current_phase(), 1u);
}

TEST(Step, PhaseChangeCostsLostTime) {
  IntersectionConfig c;
  auto s = empty_state(c);
  s.seed_queue(2, 10);
  // 3 s all-red, then 7 green ticks at 0.5 veh/s -> 3 vehicles.
  auto [next, reward] = step(std::move(s), 1, c);
  EXPECT_EQ(next.queues()[2].size(), 7u);
  EXPECT_EQ(reward, -7.0);
}

TEST(Step, InvalidActionIsArgumentError) {
  IntersectionConfig c;
  EXPECT_THROW(step(empty_state(c), 4, c), ArgumentError);
}

TEST(Config, ValidationCatchesBrokenInvariants) {
  IntersectionConfig ok;
  EXPECT_NO_THROW(ok.validate());
  auto c = ok;
  c.lost_time = 10.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.phases = {{0, 1}, {2, 3}, {4, 5}, {6}};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.phases = {{0, 1}, {0, 1}, {2, 3, 4, 5, 6, 7}};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.decision_interval = 10.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.saturation_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Episode, LoneVehicleTravelTime) {
  IntersectionConfig c;
  const auto r = run_episode(c, flow_of({{0.0, 0}}), constant_policy(0), 1);
  ASSERT_TRUE(r.avg_travel_time);
  EXPECT_GE(*r.avg_travel_time, 20.0);
  EXPECT_LE(*r.avg_travel_time, 22.0);
  EXPECT_EQ(r.completed_count, 1u);
  EXPECT_EQ(r.residual_count, 0u);
}

TEST(Episode, EmptyFlowHasNoAverage) {
  IntersectionConfig c;
  const auto r = run_episode(c, flow_of({}), constant_policy(0), 1);
  EXPECT_FALSE(r.avg_travel_time.has_value());
  EXPECT_EQ(r.completed_count, 0u);
}

TEST(Episode, StarvedVehicleIsCensoredAtEndClock) {
  IntersectionConfig c;
  const auto r = run_episode(c, flow_of({{5.0, 0}}), constant_policy(1), 1);
  EXPECT_EQ(r.completed_count, 0u);
  EXPECT_EQ(r.residual_count, 1u);
  EXPECT_DOUBLE_EQ(r.end_clock, c.horizon + c.drain);
  ASSERT_EQ(r.per_vehicle.size(), 1u);
  EXPECT_TRUE(r.per_vehicle[0].censored);
  EXPECT_DOUBLE_EQ(*r.avg_travel_time, r.end_clock - 5.0);
}

TEST(Episode, FixedTimeLoneVehicleMatchesHandSimulation) {
  // Vehicle on movement 3 (phase 1) reaches the stop line at 20 s. A 30 s
  // split puts phase 1 on at 30 s; 3 s all-red, then a discharge every 2 s:
  // exit at 35 s.
  IntersectionConfig c;
  const auto r = run_episode(c, flow_of({{0.0, 2}}), fixed_time_policy(c, {30.0}), 1);
  EXPECT_DOUBLE_EQ(*r.avg_travel_time, 35.0);
  const auto green = run_episode(c, flow_of({{0.0, 2}}), constant_policy(1), 1);
  EXPECT_GE(*r.avg_travel_time, *green.avg_travel_time);
}

TEST(Episode, ConservationAtEveryTick) {
  IntersectionConfig c;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<std::int64_t> volumes(8);
    for (auto& v : volumes) v = static_cast<std::int64_t>(rng.uniform_int(300));
    const auto flow = sample_arrivals(volumes, c.horizon, seed);
    std::size_t ticks = 0;
    const auto hook = [&](const SimState& s) {
      ++ticks;
      ASSERT_EQ(s.arrived_count(), s.approaching_count() + s.queued_count() + s.completed().size());
      for (const auto& q : s.queues())
        for (const auto& v : q) ASSERT_LE(v.arrival_time, s.clock());
      ASSERT_GE(s.phase_elapsed(), 0.0);
    };
    const auto r = run_episode(c, flow, random_policy(c), seed, hook);
    EXPECT_GT(ticks, 0u);
    EXPECT_EQ(r.completed_count + r.residual_count, flow.arrivals.size());
  }
}

TEST(Episode, ServiceIsMonotoneAndFifo) {
  IntersectionConfig c;
  const auto flow = sample_arrivals({200, 150, 90, 80, 120, 60, 40, 70}, c.horizon, 3);
  const auto r = run_episode(c, flow, max_pressure_policy(c), 3);
  ASSERT_GT(r.completed_count, 0u);
  EXPECT_GE(*r.avg_travel_time, c.approach_time);
  std::map<std::size_t, double> last_exit;
  for (const auto& v : r.per_vehicle) {
    if (v.censored) continue;
    EXPECT_GT(v.exit_s, v.arrival_s + c.approach_time);
    auto it = last_exit.find(v.movement);
    if (it != last_exit.end()) EXPECT_GT(v.exit_s, it->second);
    last_exit[v.movement] = v.exit_s;
  }
}

TEST(Episode, RewardsAreBounded) {
  IntersectionConfig c;
  const auto flow = sample_arrivals({300, 300, 300, 300, 300, 300, 300, 300}, c.horizon, 9);
  const auto r = run_episode(c, flow, random_policy(c), 9);
  const double total = static_cast<double>(flow.arrivals.size());
  for (double reward : r.reward_trace) {
    EXPECT_LE(reward, 0.0);
    EXPECT_GE(reward, -total);
  }
}

TEST(Episode, DeterministicGivenSeed) {
  IntersectionConfig c;
  const auto flow = sample_arrivals({100, 50, 80, 20, 60, 90, 10, 30}, c.horizon, 5);
  EXPECT_EQ(run_episode(c, flow, random_policy(c), 17), run_episode(c, flow, random_policy(c), 17));
}

TEST(Episode, StopsEarlyOnceEmptyAfterHorizon) {
  IntersectionConfig c;
  const auto r = run_episode(c, flow_of({{0.0, 0}}), constant_policy(0), 1);
  EXPECT_DOUBLE_EQ(r.end_clock, c.horizon);
}

TEST(Episode, TraceCsvHasOneRowPerVehicle) {
  IntersectionConfig c;
  const auto r = run_episode(c, flow_of({{0.0, 0}, {1.0, 2}}), constant_policy(0), 1);
  std::ostringstream out;
  write_trace_csv(out, r);
  const auto text = out.str();
  EXPECT_EQ(text.rfind("arrival_s,exit_s,movement,censored\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}
