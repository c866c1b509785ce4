#include "metashift/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "metashift/error.hpp"
#include "metashift/textio.hpp"

namespace metashift {

namespace {

std::string opt_text(const std::optional<double>& v) { return v ? format_exact(*v) : std::string(); }

template <class F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

const char* to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::kMetaLight: return "metalight";
    case Algorithm::kRlAdapt: return "rl_adapt";
    case Algorithm::kRlNoAdapt: return "rl_no_adapt";
    case Algorithm::kFixedTime: return "fixed_time";
    case Algorithm::kMaxPressure: return "max_pressure";
    case Algorithm::kRandom: return "random";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& text) {
  for (auto a : {Algorithm::kMetaLight, Algorithm::kRlAdapt, Algorithm::kRlNoAdapt, Algorithm::kFixedTime,
                 Algorithm::kMaxPressure, Algorithm::kRandom})
    if (text == to_string(a)) return a;
  throw ValidationError("unknown algorithm '" + text + "'");
}

EvalRecord evaluate(const Policy& policy, const std::string& algorithm, const FlowSpec& scenario,
                    const IntersectionConfig& config, std::uint64_t seed,
                    const TrainingReference* reference) {
  const auto episode = run_episode(config, scenario, policy, seed);
  EvalRecord r;
  r.algorithm = algorithm;
  r.scenario = scenario.label;
  r.avg_travel_time = episode.avg_travel_time;
  r.completed = episode.completed_count;
  r.residual = episode.residual_count;
  r.seed = seed;
  if (reference)
    r.kl_to_train = kl_distance(reference->distribution, movement_distribution(scenario, config.n_movements),
                                reference->epsilon);
  return r;
}

EvalRecord evaluate(const QNetworkParams& params, const std::string& algorithm, const FlowSpec& scenario,
                    const IntersectionConfig& config, std::uint64_t seed,
                    const TrainingReference* reference) {
  return evaluate(greedy_policy(params, config), algorithm, scenario, config, seed, reference);
}

// ---- long-form CSV -------------------------------------------------------------

void write_long_csv(std::ostream& out, const std::vector<EvalRecord>& records) {
  out << "# schema=1\nalgorithm,scenario,seed,avg_travel_time_s,completed,residual,kl_to_train\n";
  for (const auto& r : records)
    out << fmt::format("{},{},{},{},{},{},{}\n", r.algorithm, r.scenario, r.seed, opt_text(r.avg_travel_time),
                       r.completed, r.residual, opt_text(r.kl_to_train));
}

std::vector<EvalRecord> read_long_csv(std::istream& in, const std::string& source) {
  std::vector<EvalRecord> out;
  for (const auto& row : read_csv(in, source)) {
    if (row.fields.size() != 7) throw ParseError(source, row.number, "expected 7 fields");
    if (row.fields[0] == "algorithm") continue;
    EvalRecord r;
    r.algorithm = row.fields[0];
    r.scenario = row.fields[1];
    r.seed = parse_u64(row.fields[2], source, row.number);
    if (!row.fields[3].empty()) r.avg_travel_time = parse_double(row.fields[3], source, row.number);
    r.completed = static_cast<std::size_t>(parse_u64(row.fields[4], source, row.number));
    r.residual = static_cast<std::size_t>(parse_u64(row.fields[5], source, row.number));
    if (!row.fields[6].empty()) r.kl_to_train = parse_double(row.fields[6], source, row.number);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- pivot ---------------------------------------------------------------------------

PivotTable build_pivot(const std::vector<EvalRecord>& records) {
  PivotTable t;
  auto index_of = [](std::vector<std::string>& names, const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
    names.push_back(name);
    return names.size() - 1;
  };
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> samples;
  for (const auto& r : records) {
    const auto a = index_of(t.algorithms, r.algorithm);
    const auto s = index_of(t.scenarios, r.scenario);
    if (r.avg_travel_time) samples[{a, s}].push_back(*r.avg_travel_time);
  }
  t.cells.assign(t.algorithms.size(), std::vector<std::optional<PivotCell>>(t.scenarios.size()));
  for (const auto& [key, values] : samples) {
    PivotCell c;
    c.samples = values.size();
    c.min = *std::min_element(values.begin(), values.end());
    c.max = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    c.mean = sum / static_cast<double>(values.size());
    t.cells[key.first][key.second] = c;
  }
  for (std::size_t s = 0; s < t.scenarios.size(); ++s) {
    std::optional<double> best;
    for (std::size_t a = 0; a < t.algorithms.size(); ++a)
      if (t.cells[a][s] && (!best || t.cells[a][s]->mean < *best)) best = t.cells[a][s]->mean;
    if (!best) continue;
    for (std::size_t a = 0; a < t.algorithms.size(); ++a) {
      auto& cell = t.cells[a][s];
      if (!cell) continue;
      cell->best = cell->mean == *best;
      cell->delta_pct = std::lround(100.0 * (cell->mean - *best) / *best);
    }
  }
  return t;
}

std::string format_pivot_cell(const PivotCell& cell) {
  const auto range = fmt::format("{:.2f} [{:.2f}..{:.2f}]", cell.mean, cell.min, cell.max);
  if (cell.best) return range + " (best)";
  return fmt::format("{} ({:+}%)", range, cell.delta_pct);
}

void write_pivot_csv(std::ostream& out, const PivotTable& pivot) {
  out << "algorithm";
  for (const auto& s : pivot.scenarios) out << ',' << s;
  out << '\n';
  for (std::size_t a = 0; a < pivot.algorithms.size(); ++a) {
    out << pivot.algorithms[a];
    for (std::size_t s = 0; s < pivot.scenarios.size(); ++s) {
      out << ',';
      if (pivot.cells[a][s]) out << format_pivot_cell(*pivot.cells[a][s]);
    }
    out << '\n';
  }
}

std::vector<EvalRecord> mean_records(const std::vector<EvalRecord>& records) {
  std::vector<EvalRecord> out;
  std::vector<std::size_t> counts;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const EvalRecord& m) {
      return m.algorithm == r.algorithm && m.scenario == r.scenario;
    });
    if (it == out.end()) {
      EvalRecord m = r;
      m.avg_travel_time.reset();
      m.completed = m.residual = 0;
      out.push_back(m);
      counts.push_back(0);
      it = out.end() - 1;
    }
    auto& c = counts[static_cast<std::size_t>(it - out.begin())];
    if (r.avg_travel_time) {
      it->avg_travel_time = it->avg_travel_time.value_or(0.0) + *r.avg_travel_time;
      ++c;
    }
    it->completed += r.completed;
    it->residual += r.residual;
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (counts[i]) *out[i].avg_travel_time /= static_cast<double>(counts[i]);
  return out;
}

// ---- curve & timing --------------------------------------------------------------

std::vector<CurvePoint> emit_curve(const std::vector<EvalRecord>& records) {
  std::vector<CurvePoint> curve;
  for (const auto& r : records) {
    if (!r.kl_to_train)
      throw ValidationError("record " + r.algorithm + "/" + r.scenario + " has no kl_to_train");
    if (!r.avg_travel_time) continue;
    curve.push_back({*r.kl_to_train, r.algorithm, *r.avg_travel_time});
  }
  std::stable_sort(curve.begin(), curve.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.kl < b.kl; });
  return curve;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "kl,algorithm,avg_travel_time_s\n";
  for (const auto& p : curve)
    out << fmt::format("{},{},{}\n", format_exact(p.kl), p.algorithm, format_exact(p.avg_travel_time_s));
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "task,seconds\n";
  for (const auto& r : rows) out << fmt::format("{},{:.6f}\n", r.task, r.seconds);
}

void write_report_files(const std::filesystem::path& out_dir, const std::vector<EvalRecord>& records) {
  {
    auto out = open_output(out_dir / "report_pivot.csv");
    write_pivot_csv(out, build_pivot(records));
  }
  auto out = open_output(out_dir / "curve.csv");
  write_curve_csv(out, emit_curve(mean_records(records)));
}

// ---- manifest ----------------------------------------------------------------------

void ExperimentManifest::validate() const {
  if (seeds.empty()) throw ValidationError("manifest needs at least one seed");
  if (algorithms.empty()) throw ValidationError("manifest needs at least one algorithm");
  for (const auto& dir : {train_set, test_set})
    if (!std::filesystem::exists(dir / "scenarios.csv"))
      throw IoError("scenario set '" + dir.string() + "' not found");
  if (config && !std::filesystem::exists(*config)) throw IoError("config '" + config->string() + "' not found");
}

ExperimentManifest parse_manifest(const KeyValues& kv, const std::filesystem::path& base_dir) {
  ExperimentManifest m;
  auto required = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.empty()) throw ValidationError(std::string("manifest is missing '") + key + "'");
    return it->second;
  };
  for (const auto& [key, value] : kv) {
    if (key == "config") m.config = resolve(base_dir, value);
    else if (key == "train_set") m.train_set = resolve(base_dir, value);
    else if (key == "test_set") m.test_set = resolve(base_dir, value);
    else if (key == "out") m.out = resolve(base_dir, value);
    else if (key == "algorithms") {
      for (const auto& a : split(value)) m.algorithms.push_back(algorithm_from_string(a));
    } else if (key == "seeds") {
      for (const auto& s : split(value)) m.seeds.push_back(parse_u64(s, "manifest seeds", 0));
    } else {
      throw ValidationError("unknown manifest key '" + key + "'");
    }
  }
  required("train_set");
  required("test_set");
  required("algorithms");
  required("seeds");
  return m;
}

ExperimentManifest load_manifest(const std::filesystem::path& file) {
  return parse_manifest(load_key_values(file), file.parent_path());
}

// ---- experiment ------------------------------------------------------------------------

EvalReport run_experiment(const ExperimentManifest& manifest, const Settings* settings_override) {
  manifest.validate();
  if (manifest.out.empty()) throw ValidationError("manifest has no output directory");
  const Settings base_settings = settings_override ? *settings_override
                                 : manifest.config ? load_settings(*manifest.config)
                                                   : Settings{};
  const auto train = in_stage("load", [&] { return load_scenario_set(manifest.train_set); });
  const auto test = in_stage("load", [&] { return load_scenario_set(manifest.test_set); });
  auto has = [&](Algorithm a) {
    return std::find(manifest.algorithms.begin(), manifest.algorithms.end(), a) != manifest.algorithms.end();
  };

  EvalReport report;
  double meta_train_s = 0.0, meta_adapt_s = 0.0, dqn_train_s = 0.0;
  std::size_t meta_train_n = 0, meta_adapt_n = 0, dqn_train_n = 0;

  auto flush_partial = [&] {
    std::error_code ec;
    std::filesystem::create_directories(manifest.out, ec);
    auto out = open_output(manifest.out / "report_long.partial.csv");
    write_long_csv(out, report.records);
  };

  try {
    for (const auto seed : manifest.seeds) {
      Settings settings = base_settings;
      settings.finalize(seed);
      const auto& config = settings.sim;
      const TrainingReference reference{average_training_distribution(train, config.n_movements),
                                        settings.kl_epsilon};

      std::optional<DqnRun> dqn;
      if (has(Algorithm::kRlAdapt) || has(Algorithm::kRlNoAdapt)) {
        dqn = in_stage("train-dqn", [&] { return train_dqn(config, train, settings.dqn); });
        dqn_train_s += dqn->wall_seconds;
        ++dqn_train_n;
      }
      std::optional<MetaRun> meta;
      if (has(Algorithm::kMetaLight)) {
        meta = in_stage("train-meta", [&] { return train_metalight(config, train, settings.meta); });
        meta_train_s += meta->wall_seconds;
        ++meta_train_n;
      }

      for (const auto algorithm : manifest.algorithms) {
        for (const auto& flow : test.scenarios) {
          const std::uint64_t eval_seed = derive_seed(seed, "eval/" + flow.label);
          const std::string tag = to_string(algorithm);
          EvalRecord record;
          double prep_s = 0.0;
          Policy policy;
          in_stage("adapt", [&] {
            switch (algorithm) {
              case Algorithm::kMetaLight: {
                auto adapted = adapt_to_scenario(meta->checkpoint, flow, std::nullopt, config);
                prep_s = adapted.wall_seconds;
                meta_adapt_s += adapted.wall_seconds;
                ++meta_adapt_n;
                policy = greedy_policy(std::move(adapted.params), config);
                break;
              }
              case Algorithm::kRlAdapt: {
                auto adapted = adapt_params(dqn->params, settings.meta, flow, settings.meta.adapt_steps, config);
                prep_s = adapted.wall_seconds;
                policy = greedy_policy(std::move(adapted.params), config);
                break;
              }
              case Algorithm::kRlNoAdapt:
                prep_s = dqn->wall_seconds;
                policy = greedy_policy(dqn->params, config);
                break;
              case Algorithm::kFixedTime:
                policy = fixed_time_policy(config, {settings.fixed_time_split});
                break;
              case Algorithm::kMaxPressure:
                policy = max_pressure_policy(config);
                break;
              case Algorithm::kRandom:
                policy = random_policy(config);
                break;
            }
          });
          record = in_stage("evaluate", [&] { return evaluate(policy, tag, flow, config, eval_seed, &reference); });
          record.seed = seed;
          record.wall_time = prep_s;
          report.records.push_back(std::move(record));
        }
      }
    }

    report.pivot = build_pivot(report.records);
    report.curve = emit_curve(mean_records(report.records));
    auto mean_or = [](double total, std::size_t n) { return n ? total / static_cast<double>(n) : 0.0; };
    if (meta_train_n) report.timing.push_back({kTimingMetaTrain, mean_or(meta_train_s, meta_train_n)});
    if (meta_adapt_n) report.timing.push_back({kTimingMetaAdapt, mean_or(meta_adapt_s, meta_adapt_n)});
    if (dqn_train_n) report.timing.push_back({kTimingDqnTrain, mean_or(dqn_train_s, dqn_train_n)});

    in_stage("report", [&] {
      std::filesystem::create_directories(manifest.out);
      {
        auto out = open_output(manifest.out / "report_long.csv");
        write_long_csv(out, report.records);
      }
      write_report_files(manifest.out, report.records);
      auto out = open_output(manifest.out / "timing.csv");
      write_timing_csv(out, report.timing);
    });
  } catch (const StageError&) {
    flush_partial();
    throw;
  }
  return report;
}

}  // namespace metashift
