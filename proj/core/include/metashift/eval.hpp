#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metashift/meta.hpp"
#include "metashift/settings.hpp"
#include "metashift/shift_metrics.hpp"

namespace metashift {

enum class Algorithm { kMetaLight, kRlAdapt, kRlNoAdapt, kFixedTime, kMaxPressure, kRandom };

const char* to_string(Algorithm a) noexcept;
Algorithm algorithm_from_string(const std::string& text);

struct EvalRecord {
  std::string algorithm;
  std::string scenario;
  std::optional<double> avg_travel_time;
  std::size_t completed = 0;
  std::size_t residual = 0;
  std::optional<double> kl_to_train;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds spent preparing the policy (training/adaptation)
};

/// Distribution the KL column is measured against.
struct TrainingReference {
  MovementDistribution distribution;
  double epsilon = kDefaultKlEpsilon;
};

/// One greedy episode of `policy` on `scenario`.
EvalRecord evaluate(const Policy& policy, const std::string& algorithm, const FlowSpec& scenario,
                    const IntersectionConfig& config, std::uint64_t seed,
                    const TrainingReference* reference = nullptr);
EvalRecord evaluate(const QNetworkParams& params, const std::string& algorithm, const FlowSpec& scenario,
                    const IntersectionConfig& config, std::uint64_t seed,
                    const TrainingReference* reference = nullptr);

// ---- reports ---------------------------------------------------------------

/// `algorithm,scenario,seed,avg_travel_time_s,completed,residual,kl_to_train`.
/// Absent values are written as empty fields. Wall times are not part of
/// this file; it is reproducible byte for byte.
void write_long_csv(std::ostream& out, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_long_csv(std::istream& in, const std::string& source = "<report>");

struct PivotCell {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t samples = 0;
  long delta_pct = 0;  // round(100 * (mean - best) / best)
  bool best = false;
};

/// Algorithms x scenarios, in first-appearance order; cells without any
/// record are absent.
struct PivotTable {
  std::vector<std::string> algorithms;
  std::vector<std::string> scenarios;
  std::vector<std::vector<std::optional<PivotCell>>> cells;  // [algorithm][scenario]
};

PivotTable build_pivot(const std::vector<EvalRecord>& records);
/// Header `algorithm,<scenario>...`; cells `mean [min..max] (+N%)`, the
/// per-column best as `mean [min..max] (best)`.
void write_pivot_csv(std::ostream& out, const PivotTable& pivot);
std::string format_pivot_cell(const PivotCell& cell);

/// Means over seeds per (algorithm, scenario), keeping the KL column.
std::vector<EvalRecord> mean_records(const std::vector<EvalRecord>& records);

struct CurvePoint {
  double kl = 0.0;
  std::string algorithm;
  double avg_travel_time_s = 0.0;
};

/// Sorted ascending by KL (stable). Throws ValidationError when a record
/// lacks kl_to_train.
std::vector<CurvePoint> emit_curve(const std::vector<EvalRecord>& records);
/// `kl,algorithm,avg_travel_time_s`
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

struct TimingRow {
  std::string task;
  double seconds = 0.0;
};
inline constexpr const char* kTimingMetaTrain = "MetaLight training base model";
inline constexpr const char* kTimingMetaAdapt = "MetaLight adapting base model";
inline constexpr const char* kTimingDqnTrain = "FRAP++ training";
/// `task,seconds`
void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows);

/// Writes report_pivot.csv and curve.csv for the given long-form records.
void write_report_files(const std::filesystem::path& out_dir, const std::vector<EvalRecord>& records);

// ---- experiments -------------------------------------------------------------

/// Key-value file:
///   schema=1
///   config=<settings file>          (optional)
///   train_set=<scenario set dir>
///   test_set=<scenario set dir>
///   algorithms=metalight,rl_adapt,rl_no_adapt
///   seeds=1,2,3
///   out=<output dir>                (optional; the CLI --out overrides)
/// Relative paths resolve against the manifest's directory.
struct ExperimentManifest {
  std::optional<std::filesystem::path> config;
  std::filesystem::path train_set;
  std::filesystem::path test_set;
  std::vector<Algorithm> algorithms;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out;

  void validate() const;
};

ExperimentManifest parse_manifest(const KeyValues& kv, const std::filesystem::path& base_dir);
ExperimentManifest load_manifest(const std::filesystem::path& file);

struct EvalReport {
  std::vector<EvalRecord> records;
  PivotTable pivot;
  std::vector<CurvePoint> curve;
  std::vector<TimingRow> timing;
};

/// Train -> adapt -> evaluate for every algorithm x scenario x seed. Writes
/// report_long.csv, report_pivot.csv, curve.csv and timing.csv to
/// manifest.out. `settings` overrides the manifest's config file when given.
EvalReport run_experiment(const ExperimentManifest& manifest, const Settings* settings = nullptr);

}  // namespace metashift
