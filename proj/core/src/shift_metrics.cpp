#include "metashift/shift_metrics.hpp"

#include <cmath>
#include <limits>

#include "metashift/error.hpp"
#include "metashift/textio.hpp"

namespace metashift {

namespace {

MovementDistribution normalize(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw ArgumentError("volumes must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw ArgumentError("movement distribution undefined: all volumes are zero");
  for (double& w : weights) w /= total;
  return {std::move(weights)};
}

// Zero cells are lifted to epsilon; distributions without zeros pass through.
std::vector<double> smooth(const MovementDistribution& d, double epsilon) {
  std::vector<double> out(d.p.begin(), d.p.end());
  bool lifted = false;
  for (double& v : out)
    if (v == 0.0 && epsilon > 0.0) {
      v = epsilon;
      lifted = true;
    }
  if (!lifted) return out;
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

}  // namespace

MovementDistribution movement_distribution(std::span<const double> volumes) {
  return normalize({volumes.begin(), volumes.end()});
}

MovementDistribution movement_distribution(std::span<const std::int64_t> volumes) {
  std::vector<double> w;
  w.reserve(volumes.size());
  for (auto v : volumes) w.push_back(static_cast<double>(v));
  return normalize(std::move(w));
}

MovementDistribution movement_distribution(const FlowSpec& flow, std::size_t n_movements) {
  return normalize(flow.volumes(n_movements));
}

double kl_distance(const MovementDistribution& p_train, const MovementDistribution& p_test,
                   double epsilon) {
  if (p_train.size() != p_test.size()) throw ArgumentError("kl_distance: length mismatch");
  if (epsilon < 0.0) throw ArgumentError("kl_distance: epsilon must be non-negative");
  const auto p = smooth(p_train, epsilon);
  const auto q = smooth(p_test, epsilon);
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    if (p[i] == q[i]) continue;
    d += p[i] * std::log(p[i] / q[i]);
  }
  // Gibbs' inequality; clamp rounding noise below zero.
  return d < 0.0 ? 0.0 : d;
}

MovementDistribution average_training_distribution(const ScenarioSet& set, std::size_t n_movements) {
  if (set.scenarios.empty()) throw ArgumentError("average_training_distribution: empty set");
  std::vector<double> mean(n_movements, 0.0);
  for (const auto& flow : set.scenarios) {
    const auto d = movement_distribution(flow, n_movements);
    for (std::size_t i = 0; i < n_movements; ++i) mean[i] += d.p[i];
  }
  for (double& v : mean) v /= static_cast<double>(set.scenarios.size());
  return normalize(std::move(mean));
}

MovementDistribution load_distribution(const std::filesystem::path& path, std::size_t n_movements) {
  if (std::filesystem::is_directory(path))
    return average_training_distribution(load_scenario_set(path), n_movements);
  const auto source = path.string();
  const auto rows = [&] {
    auto in = open_input(path);
    return read_csv(in, source);
  }();
  if (rows.empty()) throw ValidationError(source + ": no data");
  const auto& head = rows.front().fields.front();
  if (head == "arrival_s") return movement_distribution(load_flow(path), n_movements);
  const bool labelled = head == "label";
  if (rows.size() != (labelled ? 2u : 1u))
    throw ValidationError(source + ": expected exactly one row of volumes");
  const auto& row = rows.back();
  std::vector<double> weights;
  for (std::size_t i = labelled ? 1 : 0; i < row.fields.size(); ++i)
    weights.push_back(parse_double(row.fields[i], source, row.number));
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParseError(source, row.number, "weights must be finite and >= 0");
  return movement_distribution(std::span<const double>(weights));
}

}  // namespace metashift
