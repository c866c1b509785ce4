#include "metashift/flow.hpp"

#include "metashift/error.hpp"

namespace metashift {

const char* to_string(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::kTraining: return "training";
    case ScenarioKind::kTestVariability: return "test-variability";
    case ScenarioKind::kTestVolume: return "test-volume";
    case ScenarioKind::kMixed: return "mixed";
  }
  return "unknown";
}

ScenarioKind scenario_kind_from_string(const std::string& text) {
  if (text == "training") return ScenarioKind::kTraining;
  if (text == "test-variability") return ScenarioKind::kTestVariability;
  if (text == "test-volume") return ScenarioKind::kTestVolume;
  if (text == "mixed") return ScenarioKind::kMixed;
  throw ValidationError("unknown scenario kind '" + text + "'");
}

std::vector<double> FlowSpec::volumes(std::size_t n_movements) const {
  std::vector<double> out(n_movements, 0.0);
  for (const auto& a : arrivals) {
    if (a.movement >= n_movements) throw ValidationError("arrival movement out of range");
    out[a.movement] += 1.0;
  }
  return out;
}

void validate(const FlowSpec& flow, std::size_t n_movements) {
  if (!(flow.horizon_s > 0.0)) throw ValidationError("flow horizon must be positive");
  double prev = 0.0;
  for (const auto& a : flow.arrivals) {
    if (a.movement >= n_movements)
      throw ValidationError("flow '" + flow.label + "': movement index out of range");
    if (a.time_s < 0.0 || a.time_s >= flow.horizon_s)
      throw ValidationError("flow '" + flow.label + "': arrival time outside [0, horizon)");
    if (a.time_s < prev) throw ValidationError("flow '" + flow.label + "': arrivals not sorted");
    prev = a.time_s;
  }
}

}  // namespace metashift
