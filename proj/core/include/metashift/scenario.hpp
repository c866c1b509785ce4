#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "metashift/flow.hpp"

namespace metashift {

/// Hourly volume per movement. At least one entry must be positive.
struct BaseDistribution {
  std::string label;
  std::vector<std::int64_t> volumes;

  std::int64_t total() const noexcept;
  void validate() const;

  friend bool operator==(const BaseDistribution&, const BaseDistribution&) = default;
};

struct ScenarioSet {
  ScenarioKind kind = ScenarioKind::kTraining;
  std::vector<FlowSpec> scenarios;
};

/// Uniform-scale steps applied to every base when building a training set.
inline constexpr double kTrainingScales[] = {-0.20, -0.10, 0.0, 0.10, 0.20};
inline constexpr double kTrainingHalfRange = 0.20;
/// Test scenarios: variability widened by 0.15; volume scenarios +30% total.
inline constexpr double kVariabilityHalfRange = 0.35;
inline constexpr double kVolumeHalfRange = 0.10;
inline constexpr double kVolumeScale = 0.30;
inline constexpr std::size_t kVariabilityScenarios = 3;
inline constexpr std::size_t kVolumeScenarios = 2;

/// Round half up to an integer vehicle count.
std::int64_t round_half_up(double x) noexcept;

/// volume_i = round(base_i * (1 + uniform_scale) * (1 + r_i)), r_i ~ U(-h, +h).
std::vector<std::int64_t> perturb_base(const BaseDistribution& base, double uniform_scale,
                                       double per_move_half_range, std::uint64_t seed);

/// Exactly volumes[i] arrivals on movement i with times ~ U[0, horizon),
/// quantized down to the millisecond so file round-trips are exact.
FlowSpec sample_arrivals(const std::vector<std::int64_t>& volumes, double horizon_s,
                         std::uint64_t seed);

/// bases x training scales, each perturbed with half-range 0.20 and sampled.
ScenarioSet make_training_set(const std::vector<BaseDistribution>& bases, std::uint64_t seed,
                              double horizon_s = 3600.0);

/// Three variability scenarios (bases 0,1,2 cyclically, scale 0, half-range
/// 0.35) followed by two volume scenarios (bases 3,4 cyclically, scale +0.30,
/// half-range 0.10).
ScenarioSet make_test_scenarios(const std::vector<BaseDistribution>& bases, std::uint64_t seed,
                                double horizon_s = 3600.0);

/// Seconds since midnight for "HH:MM" or "HH:MM:SS".
int parse_clock_time(const std::string& text);

/// Sums `timestamp_iso8601,movement,count` rows whose time of day lies in
/// [window_start, window_end). Window bounds are seconds since midnight and
/// must sit on 5-minute boundaries.
BaseDistribution ingest_counts_csv(std::istream& in, int window_start_s, int window_end_s,
                                   std::size_t n_movements = 8,
                                   const std::string& source = "<counts>");
BaseDistribution ingest_counts_csv(const std::filesystem::path& file, int window_start_s,
                                   int window_end_s, std::size_t n_movements = 8);

/// Built-in base distributions.
std::vector<BaseDistribution> synthetic_bases();  // five synthetic bases
std::vector<BaseDistribution> peak_hour_bases();  // AM / Midday / PM peaks

// ---- file formats -------------------------------------------------------
// Every file starts with a `# schema=1` comment line.
//   FlowSpec:          `arrival_s,movement` rows, plus `<name>.meta` sidecar
//   base distributions: `label,mov1,...,movN` rows
//   scenario set dir:   `scenarios.csv` index `index,file,label,kind`

void write_flow_csv(std::ostream& out, const FlowSpec& flow);
void write_flow_meta(std::ostream& out, const FlowSpec& flow);
void save_flow(const std::filesystem::path& csv, const FlowSpec& flow);
/// Reads the CSV and, when present, the `.meta` sidecar next to it.
FlowSpec load_flow(const std::filesystem::path& csv);
FlowSpec read_flow_csv(std::istream& in, const std::string& source = "<flow>");

void write_bases_csv(std::ostream& out, const std::vector<BaseDistribution>& bases);
void save_bases(const std::filesystem::path& file, const std::vector<BaseDistribution>& bases);
std::vector<BaseDistribution> read_bases_csv(std::istream& in, const std::string& source = "<bases>");
std::vector<BaseDistribution> load_bases(const std::filesystem::path& file);

void save_scenario_set(const std::filesystem::path& dir, const ScenarioSet& set);
ScenarioSet load_scenario_set(const std::filesystem::path& dir);

/// Digest over the canonical serialization of every scenario in the set.
std::uint64_t scenario_digest(const ScenarioSet& set);

}  // namespace metashift
