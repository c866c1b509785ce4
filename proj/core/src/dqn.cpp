#include "metashift/dqn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <ostream>

#include <fmt/format.h>

#include "metashift/error.hpp"
#include "metashift/textio.hpp"

namespace metashift {

void DqnHyper::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("dqn.gamma must lie in [0, 1)");
  if (!(lr >= 0.0)) throw ConfigError("dqn.lr must be non-negative");
  if (batch_size == 0 || target_sync == 0 || replay_capacity == 0)
    throw ConfigError("dqn counts must be positive");
  if (epsilon_start < 0 || epsilon_start > 1 || epsilon_end < 0 || epsilon_end > 1)
    throw ConfigError("dqn epsilons must lie in [0, 1]");
  if (!(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0))
    throw ConfigError("dqn.epsilon_decay_fraction must lie in (0, 1]");
  if (!(reward_scale > 0.0)) throw ConfigError("dqn.reward_scale must be positive");
  if (!(grad_clip >= 0.0)) throw ConfigError("dqn.grad_clip must be non-negative");
}

// ---- ReplayMemory ------------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ArgumentError("replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayMemory::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayMemory::at(std::size_t i) const {
  if (i >= items_.size()) throw ArgumentError("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayMemory::sample_indices(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw ArgumentError("cannot sample from an empty replay memory");
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = static_cast<std::size_t>(rng.uniform_int(items_.size()));
  return out;
}

std::vector<Transition> ReplayMemory::sample(std::size_t n, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(n);
  for (auto i : sample_indices(n, rng)) out.push_back(at(i));
  return out;
}

// ---- exploration ---------------------------------------------------------------

std::size_t epsilon_greedy(const QValues& q, double epsilon, Rng& rng) {
  if (q.q.empty()) throw ArgumentError("epsilon_greedy: empty Q-values");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("epsilon must lie in [0, 1]");
  const double u = rng.uniform();
  const auto random_phase = static_cast<std::size_t>(rng.uniform_int(q.size()));
  return u < epsilon ? random_phase : q.argmax();
}

double epsilon_at(const DqnHyper& hyper, std::size_t step, std::size_t total_steps) {
  const double span = hyper.epsilon_decay_fraction * static_cast<double>(total_steps);
  if (span <= 0.0) return hyper.epsilon_end;
  const double frac = static_cast<double>(step) / span;
  if (frac >= 1.0) return hyper.epsilon_end;
  return hyper.epsilon_start + (hyper.epsilon_end - hyper.epsilon_start) * frac;
}

std::size_t nominal_decisions(const IntersectionConfig& config) {
  return static_cast<std::size_t>(std::ceil(config.horizon / config.decision_interval - 1e-9));
}

// ---- rollouts --------------------------------------------------------------------

Rollout::Rollout(const IntersectionConfig& config, const FlowSpec& flow)
    : config_(&config), state_(config, std::make_shared<const FlowSpec>(flow)), obs_(observe(state_, config)) {}

bool Rollout::done() const {
  const auto& c = *config_;
  if (state_.clock() >= c.horizon + c.drain - 1e-9) return true;
  return state_.clock() >= c.horizon - 1e-9 && state_.empty();
}

double Rollout::advance(const QNetworkParams& params, double epsilon, double reward_scale, Rng& rng,
                        ReplayMemory& memory) {
  if (done()) throw ArgumentError("rollout: episode already finished");
  const auto q = frap_forward(params, obs_, *config_);
  const std::size_t action = epsilon_greedy(q, epsilon, rng);
  auto [next, reward] = step(std::move(state_), action, *config_);
  state_ = std::move(next);
  Observation next_obs = observe(state_, *config_);
  memory.push({obs_, action, reward * reward_scale, next_obs});
  obs_ = std::move(next_obs);
  ++stats_.decisions;
  stats_.reward_sum += reward;
  return reward;
}

RolloutStats rollout(const IntersectionConfig& config, const FlowSpec& flow,
                     const QNetworkParams& params, const std::function<double()>& epsilon,
                     double reward_scale, Rng& rng, ReplayMemory& memory,
                     const std::function<void()>& after_push) {
  Rollout episode(config, flow);
  while (!episode.done()) {
    episode.advance(params, epsilon(), reward_scale, rng, memory);
    if (after_push) after_push();
  }
  return episode.stats();
}

// ---- training --------------------------------------------------------------------

DqnRun train_dqn(const IntersectionConfig& config, const ScenarioSet& scenarios,
                 const DqnHyper& hyper, const QNetworkParams* init) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  hyper.validate();
  if (scenarios.scenarios.empty()) throw ArgumentError("train_dqn: no scenarios");

  DqnRun run;
  run.params = init ? *init : init_params(hyper.dims, derive_seed(hyper.seed, "dqn/init"));
  QNetworkParams target = run.params;
  ReplayMemory memory(hyper.replay_capacity);
  Rng act_rng(derive_seed(hyper.seed, "dqn/act"));
  Rng replay_rng(derive_seed(hyper.seed, "dqn/replay"));
  const std::size_t total_steps = hyper.episodes * nominal_decisions(config);
  std::size_t step_count = 0;

  for (std::size_t ep = 0; ep < hyper.episodes; ++ep) {
    const auto& flow = scenarios.scenarios[ep % scenarios.scenarios.size()];
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    double epsilon = epsilon_at(hyper, step_count, total_steps);
    auto learn = [&] {
      ++step_count;
      epsilon = epsilon_at(hyper, step_count, total_steps);
      if (memory.size() < hyper.batch_size) return;
      const auto batch = memory.sample(hyper.batch_size, replay_rng);
      auto [loss, grads] = bellman_grads(run.params, batch, target, hyper.gamma, config);
      run.params.add_scaled(clip_norm(std::move(grads), hyper.grad_clip), -hyper.lr);
      run.losses.push_back(loss);
      loss_sum += loss;
      ++loss_n;
      if (++run.updates % hyper.target_sync == 0) target = run.params;
    };
    const auto stats = rollout(config, flow, run.params, [&] { return epsilon; },
                               hyper.reward_scale, act_rng, memory, learn);
    run.decisions += stats.decisions;
    run.log.push_back({run.updates, ep + 1, loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0,
                       stats.decisions ? stats.reward_sum / static_cast<double>(stats.decisions) : 0.0,
                       epsilon});
  }
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "update,episode,loss,mean_reward,epsilon\n";
  for (const auto& r : log)
    out << fmt::format("{},{},{},{},{}\n", r.update, r.episode, format_exact(r.loss),
                       format_exact(r.mean_reward), format_exact(r.epsilon));
}

// ---- baselines ---------------------------------------------------------------------

Policy fixed_time_policy(const IntersectionConfig& config, std::vector<double> green_split) {
  const auto phases = config.n_phases();
  if (green_split.size() == 1) green_split.assign(phases, green_split.front());
  if (green_split.size() != phases) throw ArgumentError("fixed-time split needs one value per phase");
  std::vector<std::size_t> holds;
  for (double s : green_split) {
    if (!(s > 0.0)) throw ArgumentError("fixed-time splits must be positive");
    holds.push_back(std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(s / config.decision_interval - 1e-9))));
  }
  return [holds = std::move(holds), phase = std::size_t{0}, held = std::size_t{0}](
             const Observation&, Rng&) mutable {
    if (held == holds[phase]) {
      phase = (phase + 1) % holds.size();
      held = 0;
    }
    ++held;
    return phase;
  };
}

Policy max_pressure_policy(const IntersectionConfig& config) {
  return [phases = config.phases](const Observation& obs, Rng&) {
    std::vector<double> pressure(phases.size(), 0.0);
    for (std::size_t p = 0; p < phases.size(); ++p)
      for (auto m : phases[p]) pressure[p] += obs.queue_counts[m];
    const double best = *std::max_element(pressure.begin(), pressure.end());
    if (obs.phase_index < phases.size() && pressure[obs.phase_index] == best) return obs.phase_index;
    return static_cast<std::size_t>(std::find(pressure.begin(), pressure.end(), best) - pressure.begin());
  };
}

Policy greedy_policy(QNetworkParams params, const IntersectionConfig& config) {
  return [params = std::move(params), config](const Observation& obs, Rng&) {
    return frap_forward(params, obs, config).argmax();
  };
}

Policy random_policy(const IntersectionConfig& config) {
  return [n = config.n_phases()](const Observation&, Rng& rng) {
    return static_cast<std::size_t>(rng.uniform_int(n));
  };
}

}  // namespace metashift
