#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "metashift/intersection.hpp"
#include "metashift/network.hpp"
#include "metashift/scenario.hpp"

namespace metashift {

struct DqnHyper {
  double gamma = 0.8;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  double epsilon_start = 0.8;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.8;  // share of the nominal steps spent decaying
  std::size_t episodes = 100;
  std::size_t target_sync = 200;  // updates between target-network copies
  std::size_t replay_capacity = 10000;
  double reward_scale = 0.2;   // stored reward = reward_scale * (-total queue)
  double grad_clip = 10.0;     // global l2 bound per update; 0 disables
  NetworkDims dims;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fixed-capacity ring buffer with FIFO eviction and uniform sampling.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity = 10000);

  void push(Transition t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  /// i-th oldest transition still held.
  const Transition& at(std::size_t i) const;
  /// Uniform with replacement. Throws ArgumentError when empty.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;
  /// Index (into at()) of each draw, for frequency checks.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> items_;
};

/// With probability 1 - epsilon the argmax (lowest index on ties), else a
/// uniformly random phase. Always consumes exactly two draws.
std::size_t epsilon_greedy(const QValues& q, double epsilon, Rng& rng);

/// Linear decay over the first epsilon_decay_fraction of `total_steps`.
double epsilon_at(const DqnHyper& hyper, std::size_t step, std::size_t total_steps);

/// Decision intervals in the horizon; the epsilon schedule counts these.
std::size_t nominal_decisions(const IntersectionConfig& config);

struct TrainLogRow {
  std::size_t update = 0;
  std::size_t episode = 0;
  double loss = 0.0;  // mean over the episode's updates; 0 before warm-up
  double mean_reward = 0.0;
  double epsilon = 0.0;
};

struct DqnRun {
  QNetworkParams params;
  std::vector<TrainLogRow> log;
  std::vector<double> losses;  // one per update
  std::size_t updates = 0;
  std::size_t decisions = 0;
  double wall_seconds = 0.0;
};

/// Round-robin episodes over the scenarios; one Bellman update per decision
/// once the memory holds a batch. Starts from `init` when given, else from
/// init_params(hyper.dims, seed).
DqnRun train_dqn(const IntersectionConfig& config, const ScenarioSet& scenarios,
                 const DqnHyper& hyper, const QNetworkParams* init = nullptr);

/// `update,episode,loss,mean_reward,epsilon`
void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log);

// ---- rollouts --------------------------------------------------------------

struct RolloutStats {
  std::size_t decisions = 0;
  double reward_sum = 0.0;  // unscaled
};

/// Steppable episode: each advance() takes one epsilon-greedy decision with
/// the given weights and pushes the transition into `memory`.
class Rollout {
 public:
  Rollout(const IntersectionConfig& config, const FlowSpec& flow);

  bool done() const;
  /// Returns the unscaled reward of the decision.
  double advance(const QNetworkParams& params, double epsilon, double reward_scale, Rng& rng,
                 ReplayMemory& memory);
  const RolloutStats& stats() const noexcept { return stats_; }

 private:
  const IntersectionConfig* config_;
  SimState state_;
  Observation obs_;
  RolloutStats stats_;
};

/// One episode acting epsilon-greedily with `params`, pushing every
/// transition into `memory`. `after_push` runs after each push and may update
/// `params` in place; `epsilon` is queried before every action.
RolloutStats rollout(const IntersectionConfig& config, const FlowSpec& flow,
                     const QNetworkParams& params, const std::function<double()>& epsilon,
                     double reward_scale, Rng& rng, ReplayMemory& memory,
                     const std::function<void()>& after_push = {});

// ---- baselines -----------------------------------------------------------------

/// Cycles phases in order, holding phase p for green_split[p] seconds
/// (rounded up to whole decision intervals). A single value applies to all.
Policy fixed_time_policy(const IntersectionConfig& config, std::vector<double> green_split);

/// Phase with the largest total queue; ties keep the current phase, then the
/// lowest index.
Policy max_pressure_policy(const IntersectionConfig& config);

Policy greedy_policy(QNetworkParams params, const IntersectionConfig& config);
Policy random_policy(const IntersectionConfig& config);

}  // namespace metashift
