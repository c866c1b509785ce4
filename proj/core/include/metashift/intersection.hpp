#pragma once

// Point-queue simulator of one signalized intersection.
//
// Vehicles enter the approach at their arrival time, reach the stop line
// approach_time seconds later and join a vertical FIFO queue for their
// movement. Green movements discharge at the saturation rate; a phase change
// costs lost_time seconds of all-red. One call to step() advances exactly one
// decision interval.

#include <cstddef>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "metashift/flow.hpp"
#include "metashift/rng.hpp"

namespace metashift {

struct IntersectionConfig {
  std::size_t n_movements = 8;
  std::vector<std::vector<std::size_t>> phases = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  double saturation_rate = 0.5;  // veh/s per movement
  double approach_time = 20.0;
  double lost_time = 3.0;
  double decision_interval = 10.0;
  double tick = 1.0;
  double horizon = 3600.0;
  double drain = 600.0;

  std::size_t n_phases() const noexcept { return phases.size(); }
  /// Ticks per decision interval.
  std::size_t ticks_per_decision() const;
  /// Throws ConfigError on any violated invariant.
  void validate() const;

  friend bool operator==(const IntersectionConfig&, const IntersectionConfig&) = default;
};

struct Observation {
  std::vector<double> queue_counts;
  std::vector<double> green_flags;
  std::size_t phase_index = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct QueuedVehicle {
  double arrival_time = 0.0;
  std::size_t vehicle = 0;  // index into the flow's arrival list
};

struct CompletedVehicle {
  double arrival_time = 0.0;
  double exit_time = 0.0;
  std::size_t movement = 0;
  std::size_t vehicle = 0;
};

class SimState {
 public:
  SimState() = default;
  /// Fresh state at clock 0, phase 0. The flow must satisfy validate().
  SimState(const IntersectionConfig& config, std::shared_ptr<const FlowSpec> flow);

  double clock() const noexcept;
  std::size_t current_phase() const noexcept { return current_phase_; }
  double phase_elapsed() const noexcept { return phase_elapsed_; }
  double in_yellow() const noexcept { return in_yellow_; }

  const std::vector<std::deque<QueuedVehicle>>& queues() const noexcept { return queues_; }
  const std::vector<CompletedVehicle>& completed() const noexcept { return completed_; }

  /// Vehicles not yet at the stop line (some may not have arrived yet).
  std::size_t pending_count() const noexcept;
  /// Vehicles that entered the approach but have not reached the stop line.
  std::size_t approaching_count() const noexcept;
  std::size_t queued_count() const noexcept;
  /// Flow entries with arrival_time <= clock.
  std::size_t arrived_count() const noexcept;
  std::size_t total_vehicles() const noexcept;
  /// Every vehicle of the flow has been discharged.
  bool empty() const noexcept { return completed_.size() == total_vehicles(); }

  const FlowSpec* flow() const noexcept { return flow_.get(); }

  /// Test-only hook: overwrite a movement queue (arrival times at clock 0).
  void seed_queue(std::size_t movement, std::size_t count);

 private:
  friend struct SimKernel;

  std::shared_ptr<const FlowSpec> flow_;
  std::int64_t ticks_ = 0;
  double tick_ = 1.0;
  std::size_t current_phase_ = 0;
  double phase_elapsed_ = 0.0;
  double in_yellow_ = 0.0;
  std::size_t next_pending_ = 0;  // first flow entry not yet at the stop line
  std::vector<std::deque<QueuedVehicle>> queues_;
  std::vector<double> credit_;
  std::vector<CompletedVehicle> completed_;
  std::size_t synthetic_ = 0;  // vehicles added via seed_queue
};

struct StepResult {
  SimState state;
  double reward = 0.0;
};

/// Called after every simulated tick.
using TickHook = std::function<void(const SimState&)>;

Observation observe(const SimState& state, const IntersectionConfig& config);

/// Advance one decision interval serving `action`. Throws ArgumentError on an
/// invalid phase index. Reward is minus the total stop-line queue at the end.
StepResult step(SimState state, std::size_t action, const IntersectionConfig& config,
                const TickHook& hook = {});

/// Maps an observation to a phase index. Stateful policies keep their state in
/// the callable; run_episode takes its own copy.
using Policy = std::function<std::size_t(const Observation&, Rng&)>;

struct VehicleRecord {
  double arrival_s = 0.0;
  double exit_s = 0.0;
  std::size_t movement = 0;
  bool censored = false;

  friend bool operator==(const VehicleRecord&, const VehicleRecord&) = default;
};

struct EpisodeResult {
  std::optional<double> avg_travel_time;  // absent for an empty flow
  std::size_t completed_count = 0;
  std::size_t residual_count = 0;
  double end_clock = 0.0;
  std::vector<VehicleRecord> per_vehicle;  // in flow order
  std::vector<double> reward_trace;

  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

/// Simulates the horizon, then up to `drain` more seconds, stopping early once
/// the intersection is empty. Residual vehicles are censored at the end clock
/// and included in the average.
EpisodeResult run_episode(const IntersectionConfig& config, const FlowSpec& flow, Policy policy,
                          std::uint64_t seed, const TickHook& hook = {});

/// Per-vehicle trace: `arrival_s,exit_s,movement,censored` (movement 1-based).
void write_trace_csv(std::ostream& out, const EpisodeResult& result);

}  // namespace metashift
