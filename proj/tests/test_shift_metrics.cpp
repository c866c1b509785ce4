#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "metashift/error.hpp"
#include "metashift/scenario.hpp"
#include "metashift/shift_metrics.hpp"
#include "support.hpp"

using namespace metashift;
using namespace metashift::testing;

namespace {

MovementDistribution dist(std::vector<double> p) { return {std::move(p)}; }

/// Direct evaluation of sum p ln(p/q) in long double, no smoothing.
long double kl_oracle(const std::vector<long double>& p, const std::vector<long double>& q) {
  long double d = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) d += p[i] * std::log(p[i] / q[i]);
  return d;
}

}  // namespace

TEST(Distribution, ScenarioTwoPercentages) {
  const std::vector<std::int64_t> v{164, 332, 73, 308, 339, 58, 25, 45};
  const auto d = movement_distribution(std::span<const std::int64_t>(v));
  const double printed[] = {12.2, 24.7, 5.43, 22.91, 25.22, 4.31, 1.86, 3.34};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(100 * d.p[i], printed[i], 0.01) << i;
}

TEST(Distribution, UniformAndDegenerate) {
  const std::vector<double> flat(8, 100.0);
  EXPECT_EQ(movement_distribution(std::span<const double>(flat)).p, std::vector<double>(8, 0.125));
  const std::vector<double> zero(8, 0.0);
  EXPECT_THROW(movement_distribution(std::span<const double>(zero)), ArgumentError);
}

TEST(Distribution, ScaleInvariant) {
  const std::vector<std::int64_t> v{98, 159, 114, 147, 157, 174, 165, 289};
  for (std::int64_t k : {2, 3, 7}) {
    std::vector<std::int64_t> scaled;
    for (auto x : v) scaled.push_back(k * x);
    const auto a = movement_distribution(std::span<const std::int64_t>(v));
    const auto b = movement_distribution(std::span<const std::int64_t>(scaled));
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(a.p[i], b.p[i], 1e-15);
  }
}

TEST(Distribution, FromFlowCountsArrivals) {
  const auto f = flow_of({{0, 0}, {1, 0}, {2, 3}, {3, 7}});
  EXPECT_EQ(movement_distribution(f, 8).p, (std::vector<double>{0.5, 0, 0, 0.25, 0, 0, 0, 0.25}));
}

TEST(Kl, HandEvaluatedPair) {
  const auto p = dist({0.5, 0.5}), q = dist({0.25, 0.75});
  const double oracle = static_cast<double>(kl_oracle({0.5L, 0.5L}, {0.25L, 0.75L}));
  EXPECT_NEAR(kl_distance(p, q, 0.0), 0.143841, 1e-6);
  EXPECT_NEAR(kl_distance(p, q, 0.0), oracle, 1e-15);
  EXPECT_NEAR(kl_distance(p, q), 0.143841, 1e-6);
}

TEST(Kl, IdentityIsExactlyZero) {
  for (const auto& b : synthetic_bases()) {
    const auto d = movement_distribution(std::span<const std::int64_t>(b.volumes));
    EXPECT_EQ(kl_distance(d, d), 0.0);
    EXPECT_EQ(kl_distance(d, d, 0.0), 0.0);
  }
}

TEST(Kl, Asymmetric) {
  const auto p = dist({0.5, 0.5}), q = dist({0.25, 0.75});
  EXPECT_NE(kl_distance(p, q), kl_distance(q, p));
}

TEST(Kl, SupportMismatch) {
  const auto p = dist({0.5, 0.5}), q = dist({1.0, 0.0});
  EXPECT_EQ(kl_distance(p, q, 0.0), std::numeric_limits<double>::infinity());
  const double smoothed = kl_distance(p, q, 1e-6);
  EXPECT_TRUE(std::isfinite(smoothed));
  EXPECT_GT(smoothed, 0.0);
}

TEST(Kl, LengthMismatchIsArgumentError) {
  EXPECT_THROW(kl_distance(dist({1.0}), dist({0.5, 0.5})), ArgumentError);
}

TEST(Kl, NonNegativeOnRandomPairs) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
      b[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    }
    a[0] += 0.1;
    b[1] += 0.1;
    const auto p = movement_distribution(std::span<const double>(a));
    const auto q = movement_distribution(std::span<const double>(b));
    EXPECT_GE(kl_distance(p, q), 0.0);
  }
}

TEST(AverageDistribution, SingletonAndMirror) {
  ScenarioSet one;
  one.scenarios.push_back(flow_of({{0, 0}, {1, 1}, {2, 1}}));
  EXPECT_EQ(average_training_distribution(one, 2).p, movement_distribution(one.scenarios[0], 2).p);

  ScenarioSet pair;
  pair.scenarios.push_back(flow_of({{0, 0}, {1, 0}, {2, 0}, {3, 1}}));
  pair.scenarios.push_back(flow_of({{0, 0}, {1, 1}, {2, 1}, {3, 1}}));
  const auto avg = average_training_distribution(pair, 2);
  EXPECT_NEAR(avg.p[0], 0.5, 1e-15);
  EXPECT_NEAR(avg.p[1], 0.5, 1e-15);
  EXPECT_THROW(average_training_distribution(ScenarioSet{}, 8), ArgumentError);
}

TEST(AverageDistribution, SyntheticTestShiftIsOnTheOrderOfPointTwo) {
  // Seed-dependent; the range only pins the order of magnitude.
  const auto train = make_training_set(synthetic_bases(), 42);
  const auto test = make_test_scenarios(synthetic_bases(), 42);
  const auto ref = average_training_distribution(train, 8);
  double sum = 0.0;
  for (const auto& f : test.scenarios) {
    const double kl = kl_distance(ref, movement_distribution(f, 8));
    EXPECT_GT(kl, 0.02);
    EXPECT_LT(kl, 1.0);
    sum += kl;
  }
  EXPECT_GT(sum / 5, 0.05);
}

TEST(LoadDistribution, DetectsEachFileKind) {
  TempDir dir("dist");
  spit(dir / "w.csv", "0.5,0.5\n");
  EXPECT_EQ(load_distribution(dir / "w.csv", 8).p, (std::vector<double>{0.5, 0.5}));
  spit(dir / "b.csv", "label,mov1,mov2\nx,1,3\n");
  EXPECT_EQ(load_distribution(dir / "b.csv", 8).p, (std::vector<double>{0.25, 0.75}));
  spit(dir / "two.csv", "label,mov1,mov2\nx,1,3\ny,1,1\n");
  EXPECT_THROW(load_distribution(dir / "two.csv", 8), ValidationError);
  auto flow = sample_arrivals({2, 0, 0, 0, 0, 0, 0, 2}, 3600, 1);
  save_flow(dir / "flow.csv", flow);
  EXPECT_EQ(load_distribution(dir / "flow.csv", 8).p, (std::vector<double>{0.5, 0, 0, 0, 0, 0, 0, 0.5}));
  EXPECT_THROW(load_distribution(dir / "missing.csv", 8), IoError);
}
