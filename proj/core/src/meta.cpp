#include "metashift/meta.hpp"

#include <chrono>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "metashift/settings.hpp"
#include "metashift/textio.hpp"

namespace metashift {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// k distinct indices out of n, partial Fisher-Yates.
std::vector<std::size_t> sample_tasks(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

void MetaHyper::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0)) throw ConfigError("meta.alpha and meta.beta must be non-negative");
  if (task_batch == 0 || adapt_steps == 0 || adapt_data_budget == 0)
    throw ConfigError("meta counts must be positive (adapt_steps >= 1)");
  if (!(adapt_epsilon >= 0.0 && adapt_epsilon <= 1.0)) throw ConfigError("meta.adapt_epsilon must lie in [0, 1]");
  rl.validate();
}

QNetworkParams individual_adapt(const QNetworkParams& theta, const ReplayMemory& memory,
                                double alpha, std::size_t steps, const AdaptLoss& loss, Rng& rng) {
  if (!loss.config) throw ArgumentError("individual_adapt: missing intersection config");
  if (memory.size() < loss.batch_size)
    throw ArgumentError(fmt::format("individual_adapt: memory holds {} transitions, batch needs {}",
                                    memory.size(), loss.batch_size));
  const QNetworkParams& target = loss.target ? *loss.target : theta;
  return descend(
      theta,
      [&](const QNetworkParams& current, std::size_t) {
        const auto batch = memory.sample(loss.batch_size, rng);
        return clip_norm(bellman_grads(current, batch, target, loss.gamma, *loss.config).grads, loss.grad_clip);
      },
      alpha, steps);
}

MetaRun train_metalight(const IntersectionConfig& config, const ScenarioSet& train_scenarios,
                        const MetaHyper& hyper) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  hyper.validate();
  const auto n = train_scenarios.scenarios.size();
  if (n < hyper.task_batch)
    throw ArgumentError(fmt::format("train_metalight: {} scenarios for a task batch of {}", n, hyper.task_batch));

  MetaRun run;
  QNetworkParams theta0 = init_params(hyper.rl.dims, derive_seed(hyper.seed, "dqn/init"));
  std::vector<ReplayMemory> memories(n, ReplayMemory(hyper.rl.replay_capacity));
  Rng task_rng(derive_seed(hyper.seed, "meta/tasks"));
  Rng act_rng(derive_seed(hyper.seed, "meta/act"));
  Rng replay_rng(derive_seed(hyper.seed, "meta/replay"));

  struct Task {
    std::size_t index;
    Rollout episode;
    QNetworkParams theta;
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
  };

  for (std::size_t it = 0; it < hyper.meta_iterations; ++it) {
    const double epsilon = epsilon_at(hyper.rl, it, hyper.meta_iterations);
    QNetworkParams target = theta0;
    const AdaptLoss loss{&config, hyper.rl.gamma, hyper.rl.batch_size, &target, hyper.rl.grad_clip};
    std::vector<Task> tasks;
    for (auto i : sample_tasks(n, hyper.task_batch, task_rng))
      tasks.push_back({i, Rollout(config, train_scenarios.scenarios[i]), theta0});

    // Global-level step: fresh batches D'_i at the adapted weights, applied to
    // theta0; every base learner then restarts from the new theta0.
    auto global_step = [&] {
      std::vector<GradientSet> grads;
      for (auto& t : tasks) {
        const auto& memory = memories[t.index];
        if (memory.size() < hyper.rl.batch_size) continue;
        const auto fresh = memory.sample(hyper.rl.batch_size, replay_rng);
        auto [l, g] = bellman_grads(t.theta, fresh, target, hyper.rl.gamma, config);
        grads.push_back(clip_norm(std::move(g), hyper.rl.grad_clip));
        t.loss_sum += l;
        ++t.loss_n;
      }
      if (!grads.empty()) theta0 = global_update(std::move(theta0), std::span<const GradientSet>(grads), hyper.beta);
      target = theta0;
      for (auto& t : tasks) t.theta = theta0;
    };

    std::size_t since_update = 0;
    for (bool running = true; running;) {
      running = false;
      for (auto& t : tasks) {
        if (t.episode.done()) continue;
        running = true;
        auto& memory = memories[t.index];
        t.episode.advance(t.theta, epsilon, hyper.rl.reward_scale, act_rng, memory);
        if (memory.size() >= hyper.rl.batch_size)
          t.theta = individual_adapt(t.theta, memory, hyper.alpha, 1, loss, replay_rng);
      }
      if (!running) break;
      if (hyper.interval > 0 && ++since_update == hyper.interval) {
        global_step();
        since_update = 0;
      }
    }
    if (hyper.interval == 0 || since_update > 0) global_step();

    for (const auto& t : tasks) {
      const auto& stats = t.episode.stats();
      run.log.push_back({it + 1, t.index, train_scenarios.scenarios[t.index].label,
                         t.loss_n ? t.loss_sum / static_cast<double>(t.loss_n) : 0.0,
                         stats.decisions ? stats.reward_sum / static_cast<double>(stats.decisions) : 0.0,
                         epsilon});
    }
  }

  run.checkpoint = {std::move(theta0), hyper, scenario_digest(train_scenarios)};
  run.wall_seconds = seconds_since(started);
  return run;
}

void write_meta_log_csv(std::ostream& out, const std::vector<MetaLogRow>& log) {
  out << "iteration,task,scenario,adapted_loss,mean_reward,epsilon\n";
  for (const auto& r : log)
    out << fmt::format("{},{},{},{},{},{}\n", r.iteration, r.task, r.scenario,
                       format_exact(r.adapted_loss), format_exact(r.mean_reward), format_exact(r.epsilon));
}

AdaptResult adapt_params(const QNetworkParams& start, const MetaHyper& hyper, const FlowSpec& scenario,
                         std::size_t k, const IntersectionConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  if (k == 0) throw ArgumentError("adaptation needs at least one gradient step");
  const std::uint64_t seed = derive_seed(hyper.seed, "adapt/" + scenario.label);
  Rng act_rng(derive_seed(seed, "act"));
  Rng replay_rng(derive_seed(seed, "replay"));
  ReplayMemory memory(hyper.rl.replay_capacity);
  AdaptResult result;
  for (std::size_t e = 0; e < hyper.adapt_data_budget; ++e) {
    rollout(config, scenario, start, [&] { return hyper.adapt_epsilon; }, hyper.rl.reward_scale, act_rng,
            memory);
    ++result.episodes_used;
  }
  result.transitions = memory.size();
  const AdaptLoss loss{&config, hyper.rl.gamma, hyper.rl.batch_size, &start, hyper.rl.grad_clip};
  result.params = individual_adapt(start, memory, hyper.alpha, k, loss, replay_rng);
  result.update_steps = k;
  result.wall_seconds = seconds_since(started);
  return result;
}

AdaptResult adapt_to_scenario(const MetaCheckpoint& checkpoint, const FlowSpec& scenario,
                              std::optional<std::size_t> k_override, const IntersectionConfig& config) {
  return adapt_params(checkpoint.theta0, checkpoint.hyper, scenario,
                      k_override.value_or(checkpoint.hyper.adapt_steps), config);
}

std::vector<AblationRow> ablate_steps(const MetaCheckpoint& checkpoint, const ScenarioSet& scenarios,
                                      std::span<const std::size_t> ks, const IntersectionConfig& config) {
  if (ks.empty()) throw ArgumentError("ablate_steps: no step counts given");
  if (scenarios.scenarios.empty()) throw ArgumentError("ablate_steps: no scenarios");
  std::vector<AblationRow> rows;
  for (auto k : ks) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& flow : scenarios.scenarios) {
      const auto adapted = adapt_to_scenario(checkpoint, flow, k, config);
      const auto episode = run_episode(config, flow, greedy_policy(adapted.params, config),
                                       derive_seed(checkpoint.hyper.seed, "eval/" + flow.label));
      if (!episode.avg_travel_time) continue;
      total += *episode.avg_travel_time;
      ++counted;
    }
    rows.push_back({k, counted ? total / static_cast<double>(counted) : 0.0, counted, checkpoint.hyper.seed});
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "k,avg_travel_time_s,scenario_count,seed\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{}\n", r.k, format_exact(r.avg_travel_time_s), r.scenario_count, r.seed);
}

// ---- checkpoint file ---------------------------------------------------------

void write_meta_checkpoint(std::ostream& out, const MetaCheckpoint& checkpoint) {
  out << "metashift-meta 1\n";
  out << fmt::format("scenario_digest={:016x}\n", checkpoint.scenario_digest);
  for (const auto& [key, value] : hyper_key_values(checkpoint.hyper)) out << key << '=' << value << '\n';
  out << "params\n";
  write_params(out, checkpoint.theta0);
}

MetaCheckpoint read_meta_checkpoint(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t number = 0;
  if (!std::getline(in, line) || trim(line) != "metashift-meta 1")
    throw ParseError(source, 1, "not a metashift meta checkpoint (version 1)");
  ++number;
  MetaCheckpoint checkpoint;
  KeyValues kv;
  bool saw_params = false;
  while (std::getline(in, line)) {
    ++number;
    const auto t = trim(line);
    if (t == "params") {
      saw_params = true;
      break;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, number, "expected key=value");
    kv[t.substr(0, eq)] = t.substr(eq + 1);
  }
  if (!saw_params) throw ParseError(source, number, "missing params block");
  const auto digest = kv.find("scenario_digest");
  if (digest == kv.end()) throw ParseError(source, number, "missing scenario_digest");
  try {
    checkpoint.scenario_digest = std::stoull(digest->second, nullptr, 16);
  } catch (const std::exception&) {
    throw ParseError(source, number, "malformed scenario_digest");
  }
  kv.erase(digest);
  try {
    checkpoint.hyper = meta_hyper_from(kv);
  } catch (const ConfigError& e) {
    throw ParseError(source, number, e.what());
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  std::istringstream block(rest.str());
  checkpoint.theta0 = read_params(block, source);
  if (!(checkpoint.theta0.dims == checkpoint.hyper.rl.dims))
    throw ParseError(source, number, "parameter dims disagree with the hyperparameter block");
  return checkpoint;
}

void save_meta_checkpoint(const std::filesystem::path& file, const MetaCheckpoint& checkpoint) {
  auto out = open_output(file);
  write_meta_checkpoint(out, checkpoint);
}

MetaCheckpoint load_meta_checkpoint(const std::filesystem::path& file) {
  auto in = open_input(file);
  return read_meta_checkpoint(in, file.string());
}

void verify_digest(const MetaCheckpoint& checkpoint, const ScenarioSet& set) {
  if (checkpoint.scenario_digest != scenario_digest(set))
    throw ValidationError("meta checkpoint digest does not match the training scenarios");
}

}  // namespace metashift
