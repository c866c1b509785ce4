#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "metashift/dqn.hpp"
#include "metashift/error.hpp"
#include "metashift/eval.hpp"
#include "metashift/meta.hpp"
#include "metashift/scenario.hpp"
#include "metashift/settings.hpp"
#include "metashift/shift_metrics.hpp"
#include "metashift/textio.hpp"

namespace metashift::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string config;
  std::string out = "out";
};

Settings make_settings(const Globals& g) {
  Settings s = g.config.empty() ? Settings{} : load_settings(g.config);
  s.finalize(g.seed);
  return s;
}

std::vector<BaseDistribution> builtin_bases(const std::string& name) {
  if (name == "synthetic") return synthetic_bases();
  if (name == "peak") return peak_hour_bases();
  throw ArgumentError("unknown builtin base set '" + name + "' (synthetic|peak)");
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  for (const auto& item : split(text)) ks.push_back(static_cast<std::size_t>(parse_u64(item, "--steps", 0)));
  if (ks.empty()) throw ArgumentError("--steps needs at least one value");
  return ks;
}

std::pair<int, int> parse_window(const std::string& text) {
  const auto parts = split(text, '-');
  if (parts.size() != 2) throw ArgumentError("window must look like HH:MM-HH:MM, got '" + text + "'");
  return {parse_clock_time(parts[0]), parse_clock_time(parts[1])};
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const IoError*>(&e)) return 2;
  if (dynamic_cast<const ValidationError*>(&e)) return 3;
  return 4;
}

}  // namespace

int dispatch(int argc, char** argv) { return dispatch(argc, argv, std::cout, std::cerr); }

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Signal-control experiments under traffic distribution shift", "metashift"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--seed", g.seed, "Root seed")->capture_default_str();
    sub->add_option("--config", g.config, "Hyperparameter file (key=value)");
    sub->add_option("--out", g.out, "Output directory")->capture_default_str();
  };

  std::string bases_file, builtin = "synthetic";
  auto* gen = app.add_subcommand("gen", "Generate training and test scenario sets from base distributions");
  gen->add_option("--bases", bases_file, "Bases CSV (label,mov1..movN); defaults to the builtin set");
  gen->add_option("--builtin", builtin, "Builtin base set: synthetic|peak")->capture_default_str();
  add_globals(gen);

  std::string counts_file;
  std::vector<std::string> windows;
  auto* ingest = app.add_subcommand("ingest", "Aggregate 5-minute counts into base distributions");
  ingest->add_option("--counts", counts_file, "Counts CSV")->required();
  ingest->add_option("--window", windows, "Time-of-day window HH:MM-HH:MM (repeatable)")->required();
  add_globals(ingest);

  std::string kl_a, kl_b;
  std::optional<double> kl_eps;
  auto* kl = app.add_subcommand("kl", "KL distance between two distributions (flow, volume or set)");
  kl->add_option("--a", kl_a, "Reference (training) distribution")->required();
  kl->add_option("--b", kl_b, "Compared (test) distribution")->required();
  kl->add_option("--epsilon", kl_eps, "Smoothing epsilon (default from config, 1e-6)");
  add_globals(kl);

  std::string train_dir;
  auto* train_dqn_cmd = app.add_subcommand("train-dqn", "Train the DQN agent on a scenario set");
  train_dqn_cmd->add_option("--train", train_dir, "Training scenario set directory")->required();
  add_globals(train_dqn_cmd);

  auto* train_meta_cmd = app.add_subcommand("train-meta", "Meta-train the base model on a scenario set");
  train_meta_cmd->add_option("--train", train_dir, "Training scenario set directory")->required();
  add_globals(train_meta_cmd);

  std::string checkpoint, scenario_file;
  std::optional<std::size_t> steps;
  auto* adapt = app.add_subcommand("adapt", "Adapt a meta checkpoint to one scenario");
  adapt->add_option("--checkpoint", checkpoint, "Meta checkpoint")->required();
  adapt->add_option("--scenario", scenario_file, "Flow CSV of the new scenario")->required();
  adapt->add_option("--steps", steps, "Gradient steps k (default from checkpoint)");
  add_globals(adapt);

  std::string manifest_file;
  auto* eval = app.add_subcommand("eval", "Run an experiment manifest");
  eval->add_option("--manifest", manifest_file, "Experiment manifest (key=value)")->required();
  add_globals(eval);

  std::string test_dir, ks_text = "1,2,3,5,10";
  auto* ablate = app.add_subcommand("ablate", "Travel time versus number of adaptation steps");
  ablate->add_option("--checkpoint", checkpoint, "Meta checkpoint")->required();
  ablate->add_option("--test", test_dir, "Test scenario set directory")->required();
  ablate->add_option("--steps", ks_text, "Comma-separated step counts")->capture_default_str();
  add_globals(ablate);

  std::string long_file;
  auto* report = app.add_subcommand("report", "Rebuild pivot and curve tables from a long-form report");
  report->add_option("--long", long_file, "report_long.csv")->required();
  add_globals(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 3;
  }

  try {
    const fs::path out_dir = g.out;
    if (gen->parsed()) {
      const auto bases = bases_file.empty() ? builtin_bases(builtin) : load_bases(bases_file);
      const auto settings = make_settings(g);
      save_scenario_set(out_dir / "training", make_training_set(bases, g.seed, settings.sim.horizon));
      save_scenario_set(out_dir / "test", make_test_scenarios(bases, g.seed, settings.sim.horizon));
      save_bases(out_dir / "bases.csv", bases);
      out << fmt::format("wrote {}\n", out_dir.string());
    } else if (ingest->parsed()) {
      const auto settings = make_settings(g);
      std::vector<BaseDistribution> bases;
      for (const auto& w : windows) {
        const auto [start, end] = parse_window(w);
        bases.push_back(ingest_counts_csv(counts_file, start, end, settings.sim.n_movements));
      }
      save_bases(out_dir / "bases.csv", bases);
      for (const auto& b : bases) out << fmt::format("{} total={}\n", b.label, b.total());
    } else if (kl->parsed()) {
      const auto settings = make_settings(g);
      const auto n = settings.sim.n_movements;
      const auto d = kl_distance(load_distribution(kl_a, n), load_distribution(kl_b, n),
                                 kl_eps.value_or(settings.kl_epsilon));
      out << fmt::format("{:.6f}\n", d);
    } else if (train_dqn_cmd->parsed()) {
      const auto settings = make_settings(g);
      const auto run = train_dqn(settings.sim, load_scenario_set(train_dir), settings.dqn);
      save_params(out_dir / "dqn_params.txt", run.params);
      auto log = open_output(out_dir / "dqn_log.csv");
      write_train_log_csv(log, run.log);
      err << fmt::format("train-dqn: {} decisions, {} updates, {:.2f}s\n", run.decisions, run.updates,
                         run.wall_seconds);
    } else if (train_meta_cmd->parsed()) {
      const auto settings = make_settings(g);
      const auto run = train_metalight(settings.sim, load_scenario_set(train_dir), settings.meta);
      save_meta_checkpoint(out_dir / "meta_checkpoint.txt", run.checkpoint);
      auto log = open_output(out_dir / "meta_log.csv");
      write_meta_log_csv(log, run.log);
      err << fmt::format("train-meta: {} iterations, {:.2f}s\n", settings.meta.meta_iterations, run.wall_seconds);
    } else if (adapt->parsed()) {
      const auto settings = make_settings(g);
      const auto ckpt = load_meta_checkpoint(checkpoint);
      const auto result = adapt_to_scenario(ckpt, load_flow(scenario_file), steps, settings.sim);
      save_params(out_dir / "adapted_params.txt", result.params);
      err << fmt::format("adapt: {} episodes, {} steps, {} transitions, {:.3f}s\n", result.episodes_used,
                         result.update_steps, result.transitions, result.wall_seconds);
    } else if (eval->parsed()) {
      auto manifest = load_manifest(manifest_file);
      if (!eval->get_option("--out")->empty() || manifest.out.empty()) manifest.out = out_dir;
      std::optional<Settings> settings;
      if (!g.config.empty()) settings = load_settings(g.config);
      const auto result = run_experiment(manifest, settings ? &*settings : nullptr);
      for (const auto& t : result.timing) err << fmt::format("{}: {:.3f}s\n", t.task, t.seconds);
      out << fmt::format("wrote {} records to {}\n", result.records.size(), manifest.out.string());
    } else if (ablate->parsed()) {
      const auto settings = make_settings(g);
      const auto ckpt = load_meta_checkpoint(checkpoint);
      const auto ks = parse_ks(ks_text);
      const auto rows = ablate_steps(ckpt, load_scenario_set(test_dir), ks, settings.sim);
      auto file = open_output(out_dir / "ablation.csv");
      write_ablation_csv(file, rows);
      write_ablation_csv(out, rows);
    } else if (report->parsed()) {
      auto in = open_input(long_file);
      write_report_files(out_dir, read_long_csv(in, long_file));
      out << fmt::format("wrote {}\n", out_dir.string());
    }
    return 0;
  } catch (const Error& e) {
    err << fmt::format("error[{}]: {}\n", e.kind(), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << fmt::format("error[internal]: {}\n", e.what());
    return 4;
  }
}

}  // namespace metashift::cli
