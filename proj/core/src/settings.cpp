#include "metashift/settings.hpp"

#include <functional>
#include <map>

#include <fmt/format.h>

#include "metashift/error.hpp"

namespace metashift {

namespace {

using Setter = std::function<void(Settings&, const std::string&)>;

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v, key, 0);
  } catch (const ParseError&) {
    throw ConfigError("setting " + key + ": expected a number, got '" + v + "'");
  }
}

std::size_t to_count(const std::string& key, const std::string& v) {
  try {
    return static_cast<std::size_t>(parse_u64(v, key, 0));
  } catch (const ParseError&) {
    throw ConfigError("setting " + key + ": expected a non-negative integer, got '" + v + "'");
  }
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto real = [&t](const std::string& key, auto member) {
      t[key] = [key, member](Settings& s, const std::string& v) { member(s) = to_double(key, v); };
    };
    auto count = [&t](const std::string& key, auto member) {
      t[key] = [key, member](Settings& s, const std::string& v) { member(s) = to_count(key, v); };
    };
    t["sim.phases"] = [](Settings& s, const std::string& v) { s.sim.phases = parse_phases(v); };
    count("sim.n_movements", [](Settings& s) -> std::size_t& { return s.sim.n_movements; });
    real("sim.saturation_rate", [](Settings& s) -> double& { return s.sim.saturation_rate; });
    real("sim.approach_time", [](Settings& s) -> double& { return s.sim.approach_time; });
    real("sim.lost_time", [](Settings& s) -> double& { return s.sim.lost_time; });
    real("sim.decision_interval", [](Settings& s) -> double& { return s.sim.decision_interval; });
    real("sim.tick", [](Settings& s) -> double& { return s.sim.tick; });
    real("sim.horizon", [](Settings& s) -> double& { return s.sim.horizon; });
    real("sim.drain", [](Settings& s) -> double& { return s.sim.drain; });
    count("net.embed_dim", [](Settings& s) -> std::size_t& { return s.dqn.dims.embed_dim; });
    count("net.compete_dim", [](Settings& s) -> std::size_t& { return s.dqn.dims.compete_dim; });
    real("net.demand_scale", [](Settings& s) -> double& { return s.dqn.dims.demand_scale; });
    real("dqn.gamma", [](Settings& s) -> double& { return s.dqn.gamma; });
    real("dqn.lr", [](Settings& s) -> double& { return s.dqn.lr; });
    count("dqn.batch_size", [](Settings& s) -> std::size_t& { return s.dqn.batch_size; });
    real("dqn.epsilon_start", [](Settings& s) -> double& { return s.dqn.epsilon_start; });
    real("dqn.epsilon_end", [](Settings& s) -> double& { return s.dqn.epsilon_end; });
    real("dqn.epsilon_decay_fraction", [](Settings& s) -> double& { return s.dqn.epsilon_decay_fraction; });
    count("dqn.episodes", [](Settings& s) -> std::size_t& { return s.dqn.episodes; });
    count("dqn.target_sync", [](Settings& s) -> std::size_t& { return s.dqn.target_sync; });
    count("dqn.replay_capacity", [](Settings& s) -> std::size_t& { return s.dqn.replay_capacity; });
    real("dqn.reward_scale", [](Settings& s) -> double& { return s.dqn.reward_scale; });
    real("dqn.grad_clip", [](Settings& s) -> double& { return s.dqn.grad_clip; });
    real("meta.alpha", [](Settings& s) -> double& { return s.meta.alpha; });
    real("meta.beta", [](Settings& s) -> double& { return s.meta.beta; });
    count("meta.task_batch", [](Settings& s) -> std::size_t& { return s.meta.task_batch; });
    count("meta.meta_iterations", [](Settings& s) -> std::size_t& { return s.meta.meta_iterations; });
    count("meta.adapt_steps", [](Settings& s) -> std::size_t& { return s.meta.adapt_steps; });
    count("meta.adapt_data_budget", [](Settings& s) -> std::size_t& { return s.meta.adapt_data_budget; });
    real("meta.adapt_epsilon", [](Settings& s) -> double& { return s.meta.adapt_epsilon; });
    count("meta.interval", [](Settings& s) -> std::size_t& { return s.meta.interval; });
    real("eval.fixed_time_split", [](Settings& s) -> double& { return s.fixed_time_split; });
    real("eval.kl_epsilon", [](Settings& s) -> double& { return s.kl_epsilon; });
    return t;
  }();
  return table;
}

}  // namespace

void Settings::finalize(std::uint64_t seed) {
  dqn.seed = seed;
  meta.rl = dqn;
  meta.seed = seed;
  sim.validate();
  dqn.validate();
  meta.validate();
  if (!(fixed_time_split > 0.0)) throw ConfigError("eval.fixed_time_split must be positive");
  if (!(kl_epsilon >= 0.0)) throw ConfigError("eval.kl_epsilon must be non-negative");
}

void apply_setting(Settings& settings, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown setting '" + key + "'");
  it->second(settings, value);
}

Settings settings_from(const KeyValues& kv) {
  Settings s;
  for (const auto& [key, value] : kv) apply_setting(s, key, value);
  return s;
}

Settings load_settings(const std::filesystem::path& file) { return settings_from(load_key_values(file)); }

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, _] : setters()) k.push_back(key);
    return k;
  }();
  return keys;
}

KeyValues hyper_key_values(const MetaHyper& h) {
  KeyValues kv;
  kv["net.embed_dim"] = std::to_string(h.rl.dims.embed_dim);
  kv["net.compete_dim"] = std::to_string(h.rl.dims.compete_dim);
  kv["net.demand_scale"] = format_exact(h.rl.dims.demand_scale);
  kv["dqn.gamma"] = format_exact(h.rl.gamma);
  kv["dqn.lr"] = format_exact(h.rl.lr);
  kv["dqn.batch_size"] = std::to_string(h.rl.batch_size);
  kv["dqn.epsilon_start"] = format_exact(h.rl.epsilon_start);
  kv["dqn.epsilon_end"] = format_exact(h.rl.epsilon_end);
  kv["dqn.epsilon_decay_fraction"] = format_exact(h.rl.epsilon_decay_fraction);
  kv["dqn.episodes"] = std::to_string(h.rl.episodes);
  kv["dqn.target_sync"] = std::to_string(h.rl.target_sync);
  kv["dqn.replay_capacity"] = std::to_string(h.rl.replay_capacity);
  kv["dqn.reward_scale"] = format_exact(h.rl.reward_scale);
  kv["dqn.grad_clip"] = format_exact(h.rl.grad_clip);
  kv["meta.alpha"] = format_exact(h.alpha);
  kv["meta.beta"] = format_exact(h.beta);
  kv["meta.task_batch"] = std::to_string(h.task_batch);
  kv["meta.meta_iterations"] = std::to_string(h.meta_iterations);
  kv["meta.adapt_steps"] = std::to_string(h.adapt_steps);
  kv["meta.adapt_data_budget"] = std::to_string(h.adapt_data_budget);
  kv["meta.adapt_epsilon"] = format_exact(h.adapt_epsilon);
  kv["meta.interval"] = std::to_string(h.interval);
  kv["meta.seed"] = std::to_string(h.seed);
  return kv;
}

MetaHyper meta_hyper_from(const KeyValues& kv) {
  Settings s;
  std::uint64_t seed = 0;
  for (const auto& [key, value] : kv) {
    if (key == "meta.seed") {
      seed = parse_u64(value, "meta.seed", 0);
      continue;
    }
    apply_setting(s, key, value);
  }
  s.dqn.seed = seed;
  s.meta.rl = s.dqn;
  s.meta.seed = seed;
  s.meta.validate();
  return s.meta;
}

std::string format_phases(const std::vector<std::vector<std::size_t>>& phases) {
  std::string out;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    if (p) out += ';';
    for (std::size_t i = 0; i < phases[p].size(); ++i) {
      if (i) out += '+';
      out += std::to_string(phases[p][i] + 1);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> parse_phases(const std::string& text) {
  std::vector<std::vector<std::size_t>> phases;
  for (const auto& group : split(text, ';')) {
    std::vector<std::size_t> phase;
    for (const auto& m : split(group, '+')) {
      const auto v = to_count("sim.phases", m);
      if (v == 0) throw ConfigError("sim.phases uses 1-based movement numbers");
      phase.push_back(v - 1);
    }
    if (phase.empty()) throw ConfigError("sim.phases has an empty phase in '" + text + "'");
    phases.push_back(std::move(phase));
  }
  if (phases.empty()) throw ConfigError("sim.phases is empty");
  return phases;
}

}  // namespace metashift
