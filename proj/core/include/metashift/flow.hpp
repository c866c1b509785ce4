#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace metashift {

enum class ScenarioKind { kTraining, kTestVariability, kTestVolume, kMixed };

const char* to_string(ScenarioKind kind) noexcept;
ScenarioKind scenario_kind_from_string(const std::string& text);

/// One vehicle entering the approach. Movements are 0-based internally and
/// 1-based in every file format.
struct Arrival {
  double time_s = 0.0;
  std::size_t movement = 0;

  friend bool operator==(const Arrival&, const Arrival&) = default;
};

struct Provenance {
  std::string base_label;
  double uniform_scale = 0.0;
  double half_range = 0.0;
  std::uint64_t seed = 0;
  ScenarioKind kind = ScenarioKind::kTraining;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Per-vehicle arrival list that defines one scenario's traffic.
/// Invariants: sorted by time, every time in [0, horizon).
struct FlowSpec {
  std::string label;
  std::vector<Arrival> arrivals;
  double horizon_s = 3600.0;
  Provenance provenance;

  /// Vehicles per movement.
  std::vector<double> volumes(std::size_t n_movements) const;

  friend bool operator==(const FlowSpec&, const FlowSpec&) = default;
};

/// Throws ValidationError when the invariants above do not hold.
void validate(const FlowSpec& flow, std::size_t n_movements);

}  // namespace metashift
