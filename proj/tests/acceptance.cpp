// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cli.hpp"
#include "metashift/dqn.hpp"
#include "metashift/eval.hpp"
#include "metashift/meta.hpp"
#include "metashift/scenario.hpp"
#include "metashift/shift_metrics.hpp"
#include "support.hpp"

using namespace metashift;
using namespace metashift::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

Verdict verdict(bool pass, std::string detail) { return {pass, std::move(detail)}; }

// ---- printed tables ------------------------------------------------------------

struct PrintedRow {
  std::vector<std::int64_t> volumes;
  std::int64_t printed_total;
  std::vector<double> printed_pct;  // empty when the table prints none
};

const std::vector<PrintedRow>& synthetic_table() {
  static const std::vector<PrintedRow> rows{
      {{98, 159, 114, 147, 157, 174, 165, 289}, 1313, {7.52, 12.2, 8.74, 11.28, 12.04, 13.35, 12.66, 22.17}},
      {{164, 332, 73, 308, 339, 58, 25, 45}, 1344, {12.2, 24.7, 5.43, 22.91, 25.22, 4.31, 1.86, 3.34}},
      {{345, 85, 190, 101, 153, 127, 125, 188}, 1314, {26.25, 6.46, 14.45, 7.68, 11.64, 9.66, 9.51, 14.3}},
      {{188, 418, 98, 445, 436, 72, 27, 74}, 1758, {10.69, 23.77, 5.57, 25.31, 24.8, 4.09, 1.53, 4.2}},
      {{451, 101, 252, 139, 169, 159, 170, 250}, 1691, {26.67, 5.97, 14.9, 8.21, 9.99, 9.4, 10.05, 14.78}},
  };
  return rows;
}

const std::vector<PrintedRow>& peak_table() {
  static const std::vector<PrintedRow> rows{
      {{45, 218, 58, 290, 30, 476, 54, 65}, 1236, {}},
      {{36, 101, 35, 309, 53, 415, 49, 288}, 1251, {}},
      {{93, 304, 87, 446, 89, 358, 107, 489}, 1973, {}},
  };
  return rows;
}

Verdict c1_distribution_fidelity() {
  double worst = 0.0;
  std::vector<std::string> notes;
  auto check = [&](const std::vector<BaseDistribution>& bases, const std::vector<PrintedRow>& table,
                   const char* name) {
    if (bases.size() != table.size()) return false;
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (bases[r].volumes != table[r].volumes) return false;
      const auto d = movement_distribution(std::span<const std::int64_t>(bases[r].volumes));
      const double sum = std::accumulate(table[r].volumes.begin(), table[r].volumes.end(), 0.0);
      for (std::size_t i = 0; i < 8; ++i) {
        // Unprinted percentages are checked against the column-sum ratio.
        const double expected = table[r].printed_pct.empty() ? 100.0 * table[r].volumes[i] / sum
                                                             : table[r].printed_pct[i];
        worst = std::max(worst, std::abs(100.0 * d.p[i] - expected));
      }
      if (static_cast<std::int64_t>(sum) != table[r].printed_total)
        notes.push_back(fmt::format("{} row {} sums to {} (printed {})", name, r + 1, sum, table[r].printed_total));
    }
    return true;
  };
  const bool shapes = check(synthetic_bases(), synthetic_table(), "synthetic") &&
                      check(peak_hour_bases(), peak_table(), "peak");
  std::string detail = fmt::format("max |dP| = {:.4f} pp", worst);
  for (const auto& n : notes) detail += "; " + n;
  return verdict(shapes && worst <= 0.1, detail);
}

// ---- KL ------------------------------------------------------------------------

long double kl_oracle(const std::vector<long double>& p, const std::vector<long double>& q) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

Verdict c2_kl_oracle() {
  const MovementDistribution p{{0.5, 0.5}}, q{{0.25, 0.75}};
  const double oracle = static_cast<double>(kl_oracle({0.5L, 0.5L}, {0.25L, 0.75L}));
  const double d = kl_distance(p, q, 0.0);
  const double self = kl_distance(p, p);
  const double reverse = kl_distance(q, p, 0.0);
  const bool ok = std::abs(d - 0.143841) <= 1e-6 && std::abs(d - oracle) <= 1e-12 && self == 0.0 &&
                  std::abs(d - reverse) > 1e-3;
  return verdict(ok, fmt::format("KL(p||q) = {:.9f} (oracle {:.9f}), KL(p||p) = {}, KL(q||p) = {:.6f}", d, oracle,
                                 self, reverse));
}

// ---- network -------------------------------------------------------------------

Observation random_obs(const IntersectionConfig& c, Rng& rng) {
  Observation o;
  o.phase_index = static_cast<std::size_t>(rng.uniform_int(c.n_phases()));
  o.queue_counts.resize(c.n_movements);
  o.green_flags.assign(c.n_movements, 0.0);
  for (auto& v : o.queue_counts) v = static_cast<double>(rng.uniform_int(40));
  for (auto m : c.phases[o.phase_index]) o.green_flags[m] = 1.0;
  return o;
}

Verdict c3_gradients() {
  IntersectionConfig c;
  Rng rng(31);
  auto params = init_params(NetworkDims{}, 31);
  for (auto* b : {&params.embed_b, &params.compete_b, &params.readout_b})
    for (double& v : b->data) v = rng.uniform(-0.5, 0.5);
  const auto target = init_params(NetworkDims{}, 32);
  std::vector<Transition> batch;
  for (int i = 0; i < 32; ++i)
    batch.push_back({random_obs(c, rng), static_cast<std::size_t>(rng.uniform_int(4)), -rng.uniform(0.0, 5.0),
                     random_obs(c, rng)});
  const auto analytic = bellman_grads(params, batch, target, 0.8, c).grads;
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t checked = 0;
  std::string per_tensor;
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    const auto& g = analytic.tensors()[t]->data;
    for (std::size_t k = 0; k < g.size(); ++k) {
      auto up = params, down = params;
      up.tensors()[t]->data[k] += h;
      down.tensors()[t]->data[k] -= h;
      const double numeric =
          (bellman_loss(up, batch, target, 0.8, c) - bellman_loss(down, batch, target, 0.8, c)) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(g[k]), 1e-6});
      worst = std::max(worst, std::abs(numeric - g[k]) / scale);
      ++checked;
    }
    per_tensor += fmt::format("{}{}={}", t ? " " : "", kTensorNames[t], g.size());
  }
  return verdict(worst < 1e-4 && checked >= 100,
                 fmt::format("{} coordinates ({}), max rel err {:.2e}", checked, per_tensor, worst));
}

Verdict c4_equivariance() {
  IntersectionConfig c;
  const auto params = init_params(NetworkDims{}, 41);
  Rng rng(41);
  double worst = 0.0;
  std::size_t cases = 0;
  std::vector<std::size_t> pi(c.n_phases());
  for (int t = 0; t < 50; ++t) {
    const auto obs = random_obs(c, rng);
    const auto q = frap_forward(params, obs, c);
    std::iota(pi.begin(), pi.end(), 0);
    do {
      Observation moved = obs;
      for (std::size_t k = 0; k < pi.size(); ++k)
        for (std::size_t j = 0; j < c.phases[k].size(); ++j) {
          moved.queue_counts[c.phases[k][j]] = obs.queue_counts[c.phases[pi[k]][j]];
          moved.green_flags[c.phases[k][j]] = obs.green_flags[c.phases[pi[k]][j]];
        }
      moved.phase_index = static_cast<std::size_t>(std::find(pi.begin(), pi.end(), obs.phase_index) - pi.begin());
      const auto qp = frap_forward(params, moved, c);
      for (std::size_t k = 0; k < pi.size(); ++k) worst = std::max(worst, std::abs(qp.q[k] - q.q[pi[k]]));
      ++cases;
    } while (std::next_permutation(pi.begin(), pi.end()));
  }
  return verdict(worst <= 1e-9, fmt::format("{} observation/permutation pairs, max |dQ| = {:.1e}", cases, worst));
}

// ---- simulator -----------------------------------------------------------------

Verdict c5_conservation() {
  IntersectionConfig c;
  std::size_t violations = 0, ticks = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/volumes"));
    std::vector<std::int64_t> volumes(c.n_movements);
    for (auto& v : volumes) v = static_cast<std::int64_t>(rng.uniform_int(400));
    const auto flow = sample_arrivals(volumes, c.horizon, seed);
    const auto hook = [&](const SimState& s) {
      ++ticks;
      if (s.total_vehicles() != s.pending_count() + s.queued_count() + s.completed().size()) ++violations;
      if (s.arrived_count() != s.approaching_count() + s.queued_count() + s.completed().size()) ++violations;
    };
    const auto r = run_episode(c, flow, random_policy(c), seed, hook);
    if (r.completed_count + r.residual_count != flow.arrivals.size()) ++violations;
  }
  const auto lone = run_episode(c, flow_of({{0.0, 0}}), max_pressure_policy(c), 1);
  const double tt = lone.avg_travel_time.value_or(-1.0);
  return verdict(violations == 0 && tt >= 20.0 && tt <= 22.0,
                 fmt::format("{} ticks over 20 scenarios, {} violations; lone vehicle {:.2f} s", ticks, violations,
                             tt));
}

// ---- learning ------------------------------------------------------------------

Verdict c6_learning_sanity() {
  IntersectionConfig c;
  auto flow = sample_arrivals(skewed_toy_volumes(), c.horizon, 7);
  flow.label = "toy";
  ScenarioSet set;
  set.scenarios.push_back(flow);
  DqnHyper h;
  h.seed = 1;
  const auto run = train_dqn(c, set, h);
  const double ft = *run_episode(c, flow, fixed_time_policy(c, {Settings{}.fixed_time_split}), 1).avg_travel_time;
  const double mp = *run_episode(c, flow, max_pressure_policy(c), 1).avg_travel_time;
  const double dqn = *run_episode(c, flow, greedy_policy(run.params, c), 1).avg_travel_time;
  const bool ok = dqn <= 0.9 * ft && dqn <= 1.1 * mp;
  return verdict(ok, fmt::format("dqn {:.2f} s, fixed-time {:.2f} s ({:+.1f}%), max-pressure {:.2f} s ({:+.1f}%)",
                                 dqn, ft, 100 * (dqn - ft) / ft, mp, 100 * (dqn - mp) / mp));
}

Verdict c7_shift_degradation() {
  // Frozen model trained on one base; probe scenarios drawn near that base
  // (low KL) and from the other bases (high KL).
  IntersectionConfig c;
  const auto bases = synthetic_bases();
  double low_sum = 0.0, high_sum = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto train = make_training_set({bases[0]}, seed);
    DqnHyper h;
    h.seed = seed;
    const auto params = train_dqn(c, train, h).params;
    const auto ref = average_training_distribution(train, c.n_movements);
    const auto policy = greedy_policy(params, c);
    std::vector<double> low, high;
    auto probe = [&](const BaseDistribution& base, double half_range, std::uint64_t tag) {
      const auto volumes = perturb_base(base, 0.0, half_range, derive_seed(seed, tag));
      const auto flow = sample_arrivals(volumes, c.horizon, derive_seed(seed, tag + 1000));
      const double kl = kl_distance(ref, movement_distribution(flow, c.n_movements));
      const double tt = *run_episode(c, flow, policy, seed).avg_travel_time;
      if (kl <= 0.05) low.push_back(tt);
      if (kl >= 0.2) high.push_back(tt);
    };
    for (std::uint64_t j = 0; j < 3; ++j) probe(bases[0], 0.1, 100 + j);
    for (std::uint64_t b = 1; b < bases.size(); ++b) probe(bases[b], 0.1, 300 + b);
    if (low.empty() || high.empty()) return verdict(false, fmt::format("seed {}: empty KL bucket", seed));
    const double lo = std::accumulate(low.begin(), low.end(), 0.0) / low.size();
    const double hi = std::accumulate(high.begin(), high.end(), 0.0) / high.size();
    low_sum += lo;
    high_sum += hi;
    detail += fmt::format("seed {}: low {:.2f} s (n={}) high {:.2f} s (n={}); ", seed, lo, low.size(), hi, high.size());
  }
  const double increase = (high_sum - low_sum) / low_sum;
  return verdict(increase >= 0.05, detail + fmt::format("mean increase {:+.1f}%", 100 * increase));
}

// ---- CLI workspace shared by 8-11 ----------------------------------------------------

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "metashift");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = metashift::cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  TempDir dir{"acceptance"};
  std::string failure;

  fs::path at(const std::string& run, const std::string& stage) const { return dir / run / stage; }

  /// Runs one subcommand into <run>/<stage> for both runs a and b.
  bool twice(const std::string& stage, const std::function<std::vector<std::string>(const std::string&)>& args) {
    for (const auto* run : {"a", "b"}) {
      auto a = args(run);
      a.push_back("--out");
      a.push_back(at(run, stage).string());
      const auto r = cli(a);
      if (r.code != 0) {
        failure = fmt::format("{} exited {}: {}", stage, r.code, r.err);
        return false;
      }
    }
    return true;
  }

  bool identical(const std::string& stage) const { return tree(at("a", stage)) == tree(at("b", stage)); }
};

Workspace& workspace() {
  static Workspace ws;
  static bool built = [] {
    auto& w = ws;
    const auto seed = std::string("1");
    return w.twice("gen", [&](const std::string&) { return std::vector<std::string>{"gen", "--seed", seed}; }) &&
           w.twice("dqn",
                   [&](const std::string& r) {
                     return std::vector<std::string>{"train-dqn", "--seed", seed, "--train",
                                                     w.at(r, "gen").string() + "/training"};
                   }) &&
           w.twice("meta",
                   [&](const std::string& r) {
                     return std::vector<std::string>{"train-meta", "--seed", seed, "--train",
                                                     w.at(r, "gen").string() + "/training"};
                   }) &&
           w.twice("adapt",
                   [&](const std::string& r) {
                     return std::vector<std::string>{"adapt", "--seed", seed, "--checkpoint",
                                                     w.at(r, "meta").string() + "/meta_checkpoint.txt", "--scenario",
                                                     w.at(r, "gen").string() + "/test/scenario_001.csv"};
                   }) &&
           w.twice("ablate", [&](const std::string& r) {
             return std::vector<std::string>{"ablate", "--seed", seed, "--checkpoint",
                                             w.at(r, "meta").string() + "/meta_checkpoint.txt", "--test",
                                             w.at(r, "gen").string() + "/test"};
           });
  }();
  (void)built;
  return ws;
}

Verdict c8_adaptation_speed() {
  auto& w = workspace();
  if (!w.failure.empty()) return verdict(false, w.failure);
  IntersectionConfig c;
  Settings s;
  s.finalize(1);
  const auto train = load_scenario_set(w.at("a", "gen") / "training");
  const auto dqn_wall = train_dqn(c, train, s.dqn).wall_seconds;
  const auto ckpt = load_meta_checkpoint(w.at("a", "meta") / "meta_checkpoint.txt");
  const auto test = load_scenario_set(w.at("a", "gen") / "test");
  double adapt_wall = 0.0;
  for (const auto& flow : test.scenarios)
    adapt_wall = std::max(adapt_wall, adapt_to_scenario(ckpt, flow, std::nullopt, c).wall_seconds);
  return verdict(adapt_wall <= dqn_wall / 10,
                 fmt::format("slowest adapt {:.4f} s vs train_dqn {:.2f} s ({:.0f}x faster)", adapt_wall, dqn_wall,
                             dqn_wall / adapt_wall));
}

Verdict c9_ablation() {
  auto& w = workspace();
  if (!w.failure.empty()) return verdict(false, w.failure);
  auto in = open_input(w.at("a", "ablate") / "ablation.csv");
  std::vector<std::string> ks;
  std::string line, table;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    ks.push_back(split(line).front());
    table += fmt::format("k={} {}s ", ks.back(), split(line)[1].substr(0, 6));
  }
  const bool rows = ks == std::vector<std::string>{"1", "2", "3", "5", "10"};
  const bool same = w.identical("ablate");
  return verdict(rows && same, fmt::format("{} rows, deterministic={}; {}", ks.size(), same, table));
}

Verdict c11_experiment_shape();

Verdict c10_determinism() {
  auto& w = workspace();
  if (!w.failure.empty()) return verdict(false, w.failure);
  // report rebuilds from the long table written by the experiment run.
  const auto long_csv = w.dir / "experiment" / "report_long.csv";
  if (!fs::exists(long_csv)) c11_experiment_shape();
  if (!w.twice("report", [&](const std::string&) {
        return std::vector<std::string>{"report", "--long", long_csv.string()};
      }))
    return verdict(false, w.failure);
  std::string detail;
  bool ok = true;
  for (const auto* stage : {"gen", "dqn", "meta", "adapt", "report"}) {
    const bool same = w.identical(stage);
    ok = ok && same;
    detail += fmt::format("{}{}={}", detail.empty() ? "" : " ", stage, same ? "identical" : "DIFFERENT");
  }
  return verdict(ok, detail);
}

Verdict c11_experiment_shape() {
  auto& w = workspace();
  if (!w.failure.empty()) return verdict(false, w.failure);
  spit(w.dir / "experiment.txt",
       fmt::format("schema=1\ntrain_set={}\ntest_set={}\nalgorithms=metalight,rl_adapt,rl_no_adapt\nseeds=1,2,3\n"
                   "out=experiment\n",
                   (w.at("a", "gen") / "training").string(), (w.at("a", "gen") / "test").string()));
  static const CliRun run = cli({"eval", "--manifest", (w.dir / "experiment.txt").string()});
  if (run.code != 0) return verdict(false, fmt::format("eval exited {}: {}", run.code, run.err));

  auto in = open_input(w.dir / "experiment" / "report_long.csv");
  const auto records = read_long_csv(in);
  const auto pivot = build_pivot(records);
  bool ok = pivot.algorithms.size() == 3 && pivot.scenarios.size() == 5;
  std::size_t best_cells = 0;
  for (std::size_t s = 0; ok && s < pivot.scenarios.size(); ++s) {
    double best = INFINITY;
    for (std::size_t a = 0; a < pivot.algorithms.size(); ++a) {
      if (!pivot.cells[a][s]) ok = false;
      else best = std::min(best, pivot.cells[a][s]->mean);
    }
    for (std::size_t a = 0; ok && a < pivot.algorithms.size(); ++a) {
      const auto& cell = *pivot.cells[a][s];
      ok = ok && cell.best == (cell.mean == best) && cell.samples == 3 &&
           cell.delta_pct == std::lround(100.0 * (cell.mean - best) / best);
      best_cells += cell.best;
    }
  }
  // The written pivot must carry exactly the formatted cells.
  std::ostringstream expected;
  write_pivot_csv(expected, pivot);
  ok = ok && expected.str() == slurp(w.dir / "experiment" / "report_pivot.csv");

  std::string table;
  for (std::size_t a = 0; a < pivot.algorithms.size() && a < pivot.cells.size(); ++a) {
    table += fmt::format("\n    {:<12}", pivot.algorithms[a]);
    for (const auto& cell : pivot.cells[a]) table += " | " + (cell ? format_pivot_cell(*cell) : std::string("-"));
  }
  return verdict(ok, fmt::format("{}x{} pivot, {} best cells{}", pivot.algorithms.size(), pivot.scenarios.size(),
                                 best_cells, table));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"movement-distribution fidelity", c1_distribution_fidelity},
      {"KL oracle", c2_kl_oracle},
      {"gradient correctness", c3_gradients},
      {"phase-permutation equivariance", c4_equivariance},
      {"simulator conservation and lone vehicle", c5_conservation},
      {"learning sanity", c6_learning_sanity},
      {"shift degradation", c7_shift_degradation},
      {"adaptation speed", c8_adaptation_speed},
      {"ablation harness", c9_ablation},
      {"end-to-end determinism", c10_determinism},
      {"experiment shape", c11_experiment_shape},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = verdict(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2zu %s: %s [%.1fs] %s\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first, secs,
                v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
