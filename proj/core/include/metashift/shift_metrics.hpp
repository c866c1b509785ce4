#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "metashift/scenario.hpp"

namespace metashift {

/// Share of vehicles per movement; sums to one.
struct MovementDistribution {
  std::vector<double> p;

  std::size_t size() const noexcept { return p.size(); }
  friend bool operator==(const MovementDistribution&, const MovementDistribution&) = default;
};

inline constexpr double kDefaultKlEpsilon = 1e-6;

/// p_i = n_i / sum_j n_j. Throws ArgumentError when every count is zero.
MovementDistribution movement_distribution(std::span<const double> volumes);
MovementDistribution movement_distribution(std::span<const std::int64_t> volumes);
MovementDistribution movement_distribution(const FlowSpec& flow, std::size_t n_movements);

/// KL(p_train || p_test) in nats. Zero cells are lifted to epsilon and the
/// distribution renormalized.
/// With epsilon == 0 a zero test cell under positive train mass yields +inf.
double kl_distance(const MovementDistribution& p_train, const MovementDistribution& p_test,
                   double epsilon = kDefaultKlEpsilon);

/// Arithmetic mean of the per-scenario distributions, renormalized.
MovementDistribution average_training_distribution(const ScenarioSet& set, std::size_t n_movements);

/// Distribution from a file or directory:
///   directory                 scenario set, averaged
///   `arrival_s,...` header    flow file
///   `label,...` header        single bases row
///   otherwise                 one row of non-negative weights
MovementDistribution load_distribution(const std::filesystem::path& path, std::size_t n_movements);

}  // namespace metashift
