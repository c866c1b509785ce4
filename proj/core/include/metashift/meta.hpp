#pragma once

// First-order MetaLight-style meta-training.
//
// Each meta-iteration samples a batch of training scenarios. For every task
// the base learner starts from theta0, plays one episode and takes one
// individual-level gradient step per decision on batches from that task's
// replay memory. A fresh batch from the same memory then gives the task
// gradient at the adapted weights, and theta0 moves against the sum of the
// task gradients (global-level step). Second-order terms are ignored.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metashift/dqn.hpp"
#include "metashift/error.hpp"

namespace metashift {

struct MetaHyper {
  double alpha = 1e-3;  // individual-level rate
  double beta = 1e-3;   // global-level rate
  std::size_t task_batch = 3;
  std::size_t meta_iterations = 100;
  std::size_t adapt_steps = 3;
  std::size_t adapt_data_budget = 1;  // episodes collected in a new scenario
  double adapt_epsilon = 0.1;
  std::size_t interval = 10;  // decisions between global updates; 0 = whole episode
  /// Shared value-learning settings: gamma, batch_size, replay_capacity,
  /// reward_scale, the epsilon schedule and the network dims are read from
  /// here; lr, episodes and target_sync are not used.
  DqnHyper rl;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetaCheckpoint {
  QNetworkParams theta0;
  MetaHyper hyper;
  std::uint64_t scenario_digest = 0;
};

// ---- generic first-order steps ---------------------------------------------

/// theta_{k+1} = theta_k - alpha * grad(theta_k, k), `steps` times.
template <ParamVector P, class GradFn>
P descend(P theta, GradFn&& grad, double alpha, std::size_t steps) {
  for (std::size_t k = 0; k < steps; ++k) {
    const P g = grad(static_cast<const P&>(theta), k);
    theta.add_scaled(g, -alpha);
  }
  return theta;
}

/// theta0 - beta * sum_i g_i.
template <ParamVector P>
P global_update(P theta0, std::span<const P> task_grads, double beta) {
  if (task_grads.empty()) throw ArgumentError("global_update needs at least one task gradient");
  P total = task_grads.front();
  for (std::size_t i = 1; i < task_grads.size(); ++i) total.add_scaled(task_grads[i], 1.0);
  theta0.add_scaled(total, -beta);
  return theta0;
}

/// Loss settings for individual-level steps.
struct AdaptLoss {
  const IntersectionConfig* config = nullptr;
  double gamma = 0.8;
  std::size_t batch_size = 32;
  /// Bootstrap target; the starting weights when null.
  const QNetworkParams* target = nullptr;
  double grad_clip = 0.0;
};

/// `steps` SGD steps on freshly sampled batches. Throws ArgumentError when
/// the memory holds fewer than batch_size transitions.
QNetworkParams individual_adapt(const QNetworkParams& theta, const ReplayMemory& memory,
                                double alpha, std::size_t steps, const AdaptLoss& loss, Rng& rng);

struct MetaLogRow {
  std::size_t iteration = 0;
  std::size_t task = 0;
  std::string scenario;
  double adapted_loss = 0.0;  // mean fresh-batch loss at the adapted weights
  double mean_reward = 0.0;
  double epsilon = 0.0;
};

struct MetaRun {
  MetaCheckpoint checkpoint;
  std::vector<MetaLogRow> log;
  double wall_seconds = 0.0;
};

MetaRun train_metalight(const IntersectionConfig& config, const ScenarioSet& train_scenarios,
                        const MetaHyper& hyper);

void write_meta_log_csv(std::ostream& out, const std::vector<MetaLogRow>& log);

struct AdaptResult {
  QNetworkParams params;
  double wall_seconds = 0.0;
  std::size_t episodes_used = 0;
  std::size_t update_steps = 0;
  std::size_t transitions = 0;
};

/// Collects adapt_data_budget episodes in `scenario` acting epsilon-greedily
/// from `start`, then takes k individual-level steps.
AdaptResult adapt_params(const QNetworkParams& start, const MetaHyper& hyper, const FlowSpec& scenario,
                         std::size_t k, const IntersectionConfig& config);

AdaptResult adapt_to_scenario(const MetaCheckpoint& checkpoint, const FlowSpec& scenario,
                              std::optional<std::size_t> k_override, const IntersectionConfig& config);

struct AblationRow {
  std::size_t k = 0;
  double avg_travel_time_s = 0.0;
  std::size_t scenario_count = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kDefaultAblationSteps[] = {1, 2, 3, 5, 10};

/// One row per entry of ks: mean greedy travel time over the scenarios after
/// adapting with k steps.
std::vector<AblationRow> ablate_steps(const MetaCheckpoint& checkpoint, const ScenarioSet& scenarios,
                                      std::span<const std::size_t> ks, const IntersectionConfig& config);

/// `k,avg_travel_time_s,scenario_count,seed`
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

// ---- checkpoint file -------------------------------------------------------
//   metashift-meta 1
//   scenario_digest=<16 hex digits>
//   <key>=<value>            (hyperparameters)
//   params
//   <parameter block, see write_params>

void write_meta_checkpoint(std::ostream& out, const MetaCheckpoint& checkpoint);
MetaCheckpoint read_meta_checkpoint(std::istream& in, const std::string& source = "<meta>");
void save_meta_checkpoint(const std::filesystem::path& file, const MetaCheckpoint& checkpoint);
MetaCheckpoint load_meta_checkpoint(const std::filesystem::path& file);

/// Throws ValidationError when the digest does not match the set.
void verify_digest(const MetaCheckpoint& checkpoint, const ScenarioSet& set);

}  // namespace metashift
