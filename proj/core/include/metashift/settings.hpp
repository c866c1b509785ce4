#pragma once

// Hyperparameter file: `key=value` lines overriding the defaults.
//
//   sim.phases               1+2;3+4;5+6;7+8   (1-based movements per phase)
//   sim.n_movements sim.saturation_rate sim.approach_time sim.lost_time
//   sim.decision_interval sim.tick sim.horizon sim.drain
//   net.embed_dim net.compete_dim net.demand_scale
//   dqn.gamma dqn.lr dqn.batch_size dqn.epsilon_start dqn.epsilon_end
//   dqn.epsilon_decay_fraction dqn.episodes dqn.target_sync
//   dqn.replay_capacity dqn.reward_scale dqn.grad_clip
//   meta.alpha meta.beta meta.task_batch meta.meta_iterations
//   meta.adapt_steps meta.adapt_data_budget meta.adapt_epsilon meta.interval
//   eval.fixed_time_split eval.kl_epsilon

#include <filesystem>
#include <string>
#include <vector>

#include "metashift/meta.hpp"
#include "metashift/textio.hpp"

namespace metashift {

struct Settings {
  IntersectionConfig sim;
  DqnHyper dqn;
  MetaHyper meta;  // meta.rl mirrors dqn after finalize()
  double fixed_time_split = 30.0;
  double kl_epsilon = 1e-6;

  /// Copies shared RL settings into meta.rl, applies `seed` everywhere and
  /// validates.
  void finalize(std::uint64_t seed);
};

/// Throws ConfigError for unknown keys or unparsable values.
void apply_setting(Settings& settings, const std::string& key, const std::string& value);
Settings settings_from(const KeyValues& kv);
Settings load_settings(const std::filesystem::path& file);

const std::vector<std::string>& setting_keys();

/// net.*, dqn.* and meta.* entries sufficient to rebuild `hyper`.
KeyValues hyper_key_values(const MetaHyper& hyper);
MetaHyper meta_hyper_from(const KeyValues& kv);

std::string format_phases(const std::vector<std::vector<std::size_t>>& phases);
std::vector<std::vector<std::size_t>> parse_phases(const std::string& text);

}  // namespace metashift
