#include "metashift/intersection.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "metashift/error.hpp"

namespace metashift {

namespace {

constexpr double kCreditEps = 1e-9;

bool is_multiple(double value, double unit) {
  const double ratio = value / unit;
  return std::abs(ratio - std::round(ratio)) < 1e-9;
}

}  // namespace

std::size_t IntersectionConfig::ticks_per_decision() const {
  return static_cast<std::size_t>(std::llround(decision_interval / tick));
}

void IntersectionConfig::validate() const {
  if (n_movements == 0) throw ConfigError("n_movements must be positive");
  if (phases.empty()) throw ConfigError("at least one phase is required");
  std::vector<bool> covered(n_movements, false);
  std::set<std::vector<std::size_t>> distinct;
  for (const auto& phase : phases) {
    if (phase.empty()) throw ConfigError("phases must be non-empty");
    for (auto m : phase) {
      if (m >= n_movements) throw ConfigError("phase references unknown movement");
      covered[m] = true;
    }
    auto sorted = phase;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("phase lists a movement twice");
    if (!distinct.insert(sorted).second) throw ConfigError("phases must be pairwise distinct");
  }
  if (std::find(covered.begin(), covered.end(), false) != covered.end())
    throw ConfigError("every movement must appear in at least one phase");
  if (!(saturation_rate > 0 && approach_time > 0 && lost_time > 0 && decision_interval > 0 &&
        tick > 0 && horizon > 0 && drain > 0))
    throw ConfigError("rates and times must be strictly positive");
  if (!is_multiple(decision_interval, tick))
    throw ConfigError("decision_interval must be a multiple of tick");
  if (!(lost_time < decision_interval)) throw ConfigError("lost_time must be below decision_interval");
}

// Mutation kernel shared by step(); keeps SimState's representation private.
struct SimKernel {
  static void select(SimState& s, std::size_t action, const IntersectionConfig& config) {
    if (action == s.current_phase_) return;
    s.current_phase_ = action;
    s.phase_elapsed_ = 0.0;
    s.in_yellow_ = config.lost_time;
  }

  static void admit(SimState& s, double now, double approach_time) {
    const auto& arrivals = s.flow_->arrivals;
    while (s.next_pending_ < arrivals.size() &&
           arrivals[s.next_pending_].time_s + approach_time <= now) {
      const auto& a = arrivals[s.next_pending_];
      s.queues_[a.movement].push_back({a.time_s, s.next_pending_});
      ++s.next_pending_;
    }
  }

  static void tick(SimState& s, const IntersectionConfig& config) {
    const double now = static_cast<double>(s.ticks_) * s.tick_;
    admit(s, now, config.approach_time);

    if (s.in_yellow_ > 0.0) {
      s.in_yellow_ = std::max(0.0, s.in_yellow_ - config.tick);
      std::fill(s.credit_.begin(), s.credit_.end(), 0.0);
    } else {
      const auto& green = config.phases[s.current_phase_];
      const double exit_time = now + config.tick;
      for (std::size_t m = 0; m < config.n_movements; ++m) {
        const bool is_green = std::find(green.begin(), green.end(), m) != green.end();
        auto& queue = s.queues_[m];
        if (!is_green || queue.empty()) {
          s.credit_[m] = 0.0;
          continue;
        }
        s.credit_[m] += config.saturation_rate * config.tick;
        while (s.credit_[m] >= 1.0 - kCreditEps && !queue.empty()) {
          const auto v = queue.front();
          queue.pop_front();
          s.completed_.push_back({v.arrival_time, exit_time, m, v.vehicle});
          s.credit_[m] -= 1.0;
        }
        if (queue.empty()) s.credit_[m] = 0.0;
      }
    }
    ++s.ticks_;
    s.phase_elapsed_ += config.tick;
  }
};

SimState::SimState(const IntersectionConfig& config, std::shared_ptr<const FlowSpec> flow)
    : flow_(std::move(flow)),
      tick_(config.tick),
      queues_(config.n_movements),
      credit_(config.n_movements, 0.0) {
  config.validate();
  if (!flow_) throw ArgumentError("SimState requires a flow");
  metashift::validate(*flow_, config.n_movements);
}

double SimState::clock() const noexcept { return static_cast<double>(ticks_) * tick_; }

std::size_t SimState::pending_count() const noexcept {
  return flow_ ? flow_->arrivals.size() - next_pending_ : 0;
}

std::size_t SimState::approaching_count() const noexcept {
  if (!flow_) return 0;
  const double now = clock();
  std::size_t n = 0;
  for (std::size_t i = next_pending_; i < flow_->arrivals.size(); ++i) {
    if (flow_->arrivals[i].time_s > now) break;
    ++n;
  }
  return n;
}

std::size_t SimState::queued_count() const noexcept {
  std::size_t n = 0;
  for (const auto& q : queues_) n += q.size();
  return n;
}

std::size_t SimState::arrived_count() const noexcept {
  if (!flow_) return synthetic_;
  const double now = clock();
  const auto& a = flow_->arrivals;
  const auto it = std::upper_bound(a.begin(), a.end(), now,
                                   [](double t, const Arrival& x) { return t < x.time_s; });
  return static_cast<std::size_t>(it - a.begin()) + synthetic_;
}

std::size_t SimState::total_vehicles() const noexcept {
  return (flow_ ? flow_->arrivals.size() : 0) + synthetic_;
}

void SimState::seed_queue(std::size_t movement, std::size_t count) {
  if (movement >= queues_.size()) throw ArgumentError("seed_queue: movement out of range");
  const std::size_t base = (flow_ ? flow_->arrivals.size() : 0) + synthetic_;
  for (std::size_t k = 0; k < count; ++k) queues_[movement].push_back({clock(), base + k});
  synthetic_ += count;
}

Observation observe(const SimState& state, const IntersectionConfig& config) {
  if (state.queues().size() != config.n_movements)
    throw ConfigError("state and config disagree on the movement count");
  if (state.current_phase() >= config.n_phases()) throw ConfigError("state phase out of range");
  Observation obs;
  obs.queue_counts.resize(config.n_movements);
  obs.green_flags.assign(config.n_movements, 0.0);
  for (std::size_t m = 0; m < config.n_movements; ++m)
    obs.queue_counts[m] = static_cast<double>(state.queues()[m].size());
  for (auto m : config.phases[state.current_phase()]) obs.green_flags[m] = 1.0;
  obs.phase_index = state.current_phase();
  return obs;
}

StepResult step(SimState state, std::size_t action, const IntersectionConfig& config,
                const TickHook& hook) {
  if (action >= config.n_phases())
    throw ArgumentError(fmt::format("invalid phase index {} (have {})", action, config.n_phases()));
  if (state.queues().size() != config.n_movements)
    throw ConfigError("state and config disagree on the movement count");
  SimKernel::select(state, action, config);
  const std::size_t ticks = config.ticks_per_decision();
  for (std::size_t t = 0; t < ticks; ++t) {
    SimKernel::tick(state, config);
    if (hook) hook(state);
  }
  const double reward = -static_cast<double>(state.queued_count());
  return {std::move(state), reward};
}

EpisodeResult run_episode(const IntersectionConfig& config, const FlowSpec& flow, Policy policy,
                          std::uint64_t seed, const TickHook& hook) {
  config.validate();
  auto shared = std::make_shared<const FlowSpec>(flow);
  SimState state(config, shared);
  Rng rng(seed);
  EpisodeResult result;

  const double limit = config.horizon + config.drain;
  while (state.clock() < limit - 1e-9) {
    if (state.clock() >= config.horizon - 1e-9 && state.empty()) break;
    const auto obs = observe(state, config);
    const std::size_t action = policy(obs, rng);
    auto [next, reward] = step(std::move(state), action, config, hook);
    state = std::move(next);
    result.reward_trace.push_back(reward);
  }

  const double end = state.clock();
  result.end_clock = end;
  const auto& arrivals = flow.arrivals;
  result.per_vehicle.resize(arrivals.size());
  std::vector<bool> done(arrivals.size(), false);
  for (const auto& c : state.completed()) {
    result.per_vehicle[c.vehicle] = {c.arrival_time, c.exit_time, c.movement, false};
    done[c.vehicle] = true;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    if (!done[i]) {
      result.per_vehicle[i] = {arrivals[i].time_s, end, arrivals[i].movement, true};
      ++result.residual_count;
    } else {
      ++result.completed_count;
    }
    total += result.per_vehicle[i].exit_s - result.per_vehicle[i].arrival_s;
  }
  if (!arrivals.empty()) result.avg_travel_time = total / static_cast<double>(arrivals.size());
  return result;
}

void write_trace_csv(std::ostream& out, const EpisodeResult& result) {
  out << "arrival_s,exit_s,movement,censored\n";
  for (const auto& v : result.per_vehicle)
    out << fmt::format("{},{},{},{}\n", v.arrival_s, v.exit_s, v.movement + 1, v.censored ? 1 : 0);
}

}  // namespace metashift
