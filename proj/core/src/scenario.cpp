#include "metashift/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "metashift/error.hpp"
#include "metashift/rng.hpp"
#include "metashift/textio.hpp"

namespace metashift {

namespace {

constexpr int kBucketSeconds = 300;

FlowSpec make_scenario(const BaseDistribution& base, double scale, double half_range,
                       std::uint64_t seed, const std::string& stream, double horizon_s,
                       ScenarioKind kind, std::string label) {
  const auto volumes = perturb_base(base, scale, half_range, derive_seed(seed, stream + "/perturb"));
  const std::uint64_t arrival_seed = derive_seed(seed, stream + "/arrivals");
  FlowSpec flow = sample_arrivals(volumes, horizon_s, arrival_seed);
  flow.label = std::move(label);
  flow.provenance = {base.label, scale, half_range, seed, kind};
  return flow;
}

void require_bases(const std::vector<BaseDistribution>& bases) {
  if (bases.empty()) throw ArgumentError("at least one base distribution is required");
  for (const auto& b : bases) b.validate();
}

// "YYYY-MM-DDTHH:MM[:SS][...]" -> seconds since midnight.
int time_of_day(const std::string& ts, const std::string& source, std::size_t line) {
  const auto t = ts.find('T') != std::string::npos ? ts.find('T') : ts.find(' ');
  if (t == std::string::npos || t != 10) throw ParseError(source, line, "malformed timestamp '" + ts + "'");
  auto digits = [&](std::size_t pos) {
    if (pos + 2 > ts.size() || !std::isdigit(static_cast<unsigned char>(ts[pos])) ||
        !std::isdigit(static_cast<unsigned char>(ts[pos + 1])))
      throw ParseError(source, line, "malformed timestamp '" + ts + "'");
    return (ts[pos] - '0') * 10 + (ts[pos + 1] - '0');
  };
  const int hh = digits(11);
  if (ts.size() < 14 || ts[13] != ':') throw ParseError(source, line, "malformed timestamp '" + ts + "'");
  const int mm = digits(14);
  int ss = 0;
  if (ts.size() > 16 && ts[16] == ':') ss = digits(17);
  if (hh > 23 || mm > 59 || ss > 60) throw ParseError(source, line, "timestamp out of range '" + ts + "'");
  return hh * 3600 + mm * 60 + ss;
}

std::string clock_label(int seconds) {
  return fmt::format("{:02}:{:02}", seconds / 3600, (seconds / 60) % 60);
}

}  // namespace

std::int64_t BaseDistribution::total() const noexcept {
  std::int64_t t = 0;
  for (auto v : volumes) t += v;
  return t;
}

void BaseDistribution::validate() const {
  if (volumes.empty()) throw ArgumentError("base distribution '" + label + "' has no movements");
  for (auto v : volumes)
    if (v < 0) throw ArgumentError("base distribution '" + label + "' has a negative volume");
  if (total() <= 0) throw ArgumentError("base distribution '" + label + "' is all zero");
}

std::int64_t round_half_up(double x) noexcept { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

std::vector<std::int64_t> perturb_base(const BaseDistribution& base, double uniform_scale,
                                       double per_move_half_range, std::uint64_t seed) {
  base.validate();
  if (uniform_scale < -0.5 || uniform_scale > 0.5)
    throw ArgumentError("uniform_scale must lie in [-0.5, 0.5]");
  if (per_move_half_range < 0.0 || per_move_half_range > 0.5)
    throw ArgumentError("per_move_half_range must lie in [0, 0.5]");
  Rng rng(seed);
  std::vector<std::int64_t> out;
  out.reserve(base.volumes.size());
  for (auto v : base.volumes) {
    const double r = rng.uniform(-per_move_half_range, per_move_half_range);
    out.push_back(round_half_up(static_cast<double>(v) * (1.0 + uniform_scale) * (1.0 + r)));
  }
  return out;
}

FlowSpec sample_arrivals(const std::vector<std::int64_t>& volumes, double horizon_s,
                         std::uint64_t seed) {
  if (!(horizon_s > 0.0)) throw ArgumentError("horizon must be positive");
  Rng rng(seed);
  FlowSpec flow;
  flow.horizon_s = horizon_s;
  const double ms = std::floor(horizon_s * 1000.0);
  for (std::size_t m = 0; m < volumes.size(); ++m) {
    if (volumes[m] < 0) throw ArgumentError("negative volume");
    for (std::int64_t k = 0; k < volumes[m]; ++k) {
      const double t = std::floor(rng.uniform() * ms) / 1000.0;
      flow.arrivals.push_back({t, m});
    }
  }
  std::stable_sort(flow.arrivals.begin(), flow.arrivals.end(),
                   [](const Arrival& a, const Arrival& b) { return a.time_s < b.time_s; });
  return flow;
}

ScenarioSet make_training_set(const std::vector<BaseDistribution>& bases, std::uint64_t seed,
                              double horizon_s) {
  require_bases(bases);
  ScenarioSet set;
  set.kind = ScenarioKind::kTraining;
  for (std::size_t b = 0; b < bases.size(); ++b) {
    for (std::size_t s = 0; s < std::size(kTrainingScales); ++s) {
      const auto stream = fmt::format("train/b{}/s{}", b, s);
      const auto label = fmt::format("train-{:02}-{}", b + 1, s + 1);
      set.scenarios.push_back(make_scenario(bases[b], kTrainingScales[s], kTrainingHalfRange, seed,
                                            stream, horizon_s, ScenarioKind::kTraining, label));
    }
  }
  return set;
}

ScenarioSet make_test_scenarios(const std::vector<BaseDistribution>& bases, std::uint64_t seed,
                                double horizon_s) {
  require_bases(bases);
  ScenarioSet set;
  set.kind = ScenarioKind::kMixed;
  for (std::size_t j = 0; j < kVariabilityScenarios; ++j) {
    const auto& base = bases[j % bases.size()];
    set.scenarios.push_back(make_scenario(base, 0.0, kVariabilityHalfRange, seed,
                                          fmt::format("test/var{}", j), horizon_s,
                                          ScenarioKind::kTestVariability,
                                          fmt::format("test-{}", j + 1)));
  }
  for (std::size_t j = 0; j < kVolumeScenarios; ++j) {
    const auto& base = bases[(kVariabilityScenarios + j) % bases.size()];
    set.scenarios.push_back(make_scenario(base, kVolumeScale, kVolumeHalfRange, seed,
                                          fmt::format("test/vol{}", j), horizon_s,
                                          ScenarioKind::kTestVolume,
                                          fmt::format("test-{}", kVariabilityScenarios + j + 1)));
  }
  return set;
}

int parse_clock_time(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() < 2 || parts.size() > 3) throw ArgumentError("expected HH:MM[:SS], got '" + text + "'");
  int values[3] = {0, 0, 0};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto v = parse_int(parts[i], "<clock time>", 1);
    values[i] = static_cast<int>(v);
  }
  if (values[0] < 0 || values[0] > 24 || values[1] < 0 || values[1] > 59 || values[2] < 0 ||
      values[2] > 59)
    throw ArgumentError("clock time out of range: '" + text + "'");
  const int seconds = values[0] * 3600 + values[1] * 60 + values[2];
  if (seconds > 24 * 3600) throw ArgumentError("clock time out of range: '" + text + "'");
  return seconds;
}

BaseDistribution ingest_counts_csv(std::istream& in, int window_start_s, int window_end_s,
                                   std::size_t n_movements, const std::string& source) {
  if (window_start_s % kBucketSeconds != 0 || window_end_s % kBucketSeconds != 0)
    throw ArgumentError("window bounds must align to 5-minute buckets");
  if (window_end_s <= window_start_s) throw ArgumentError("window end must follow window start");
  const auto rows = read_csv(in, source);
  BaseDistribution out;
  out.label = clock_label(window_start_s) + "-" + clock_label(window_end_s);
  out.volumes.assign(n_movements, 0);
  std::size_t matched = 0;
  bool header_seen = false;
  for (const auto& row : rows) {
    if (!header_seen && !row.fields.empty() && row.fields[0] == "timestamp_iso8601") {
      header_seen = true;
      continue;
    }
    if (row.fields.size() != 3) throw ParseError(source, row.number, "expected 3 fields");
    const int tod = time_of_day(row.fields[0], source, row.number);
    const auto movement = parse_int(row.fields[1], source, row.number);
    const auto count = parse_int(row.fields[2], source, row.number);
    if (movement < 1 || static_cast<std::size_t>(movement) > n_movements)
      throw ParseError(source, row.number, fmt::format("movement {} out of range", movement));
    if (count < 0) throw ParseError(source, row.number, "negative count");
    if (tod < window_start_s || tod >= window_end_s) continue;
    out.volumes[static_cast<std::size_t>(movement - 1)] += count;
    ++matched;
  }
  if (matched == 0) throw ValidationError("no count rows fall inside window " + out.label);
  return out;
}

BaseDistribution ingest_counts_csv(const std::filesystem::path& file, int window_start_s,
                                   int window_end_s, std::size_t n_movements) {
  auto in = open_input(file);
  return ingest_counts_csv(in, window_start_s, window_end_s, n_movements, file.string());
}

std::vector<BaseDistribution> synthetic_bases() {
  return {
      {"base-1", {98, 159, 114, 147, 157, 174, 165, 289}},
      {"base-2", {164, 332, 73, 308, 339, 58, 25, 45}},
      {"base-3", {345, 85, 190, 101, 153, 127, 125, 188}},
      {"base-4", {188, 418, 98, 445, 436, 72, 27, 74}},
      {"base-5", {451, 101, 252, 139, 169, 159, 170, 250}},
  };
}

std::vector<BaseDistribution> peak_hour_bases() {
  return {
      {"am-peak", {45, 218, 58, 290, 30, 476, 54, 65}},
      {"midday-peak", {36, 101, 35, 309, 53, 415, 49, 288}},
      {"pm-peak", {93, 304, 87, 446, 89, 358, 107, 489}},
  };
}

// ---- file formats ----------------------------------------------------------

void write_flow_csv(std::ostream& out, const FlowSpec& flow) {
  out << "# schema=1\narrival_s,movement\n";
  for (const auto& a : flow.arrivals) out << fmt::format("{:.3f},{}\n", a.time_s, a.movement + 1);
}

void write_flow_meta(std::ostream& out, const FlowSpec& flow) {
  out << "# schema=1\n";
  out << "label=" << flow.label << '\n';
  out << "base_label=" << flow.provenance.base_label << '\n';
  out << "kind=" << to_string(flow.provenance.kind) << '\n';
  out << "uniform_scale=" << format_exact(flow.provenance.uniform_scale) << '\n';
  out << "half_range=" << format_exact(flow.provenance.half_range) << '\n';
  out << "seed=" << flow.provenance.seed << '\n';
  out << "horizon=" << format_exact(flow.horizon_s) << '\n';
}

void save_flow(const std::filesystem::path& csv, const FlowSpec& flow) {
  {
    auto out = open_output(csv);
    write_flow_csv(out, flow);
  }
  auto meta_path = csv;
  meta_path.replace_extension(".meta");
  auto meta = open_output(meta_path);
  write_flow_meta(meta, flow);
}

FlowSpec read_flow_csv(std::istream& in, const std::string& source) {
  FlowSpec flow;
  flow.label = source;
  const auto rows = read_csv(in, source);
  bool header_seen = false;
  for (const auto& row : rows) {
    if (!header_seen && row.fields.size() == 2 && row.fields[0] == "arrival_s") {
      header_seen = true;
      continue;
    }
    if (row.fields.size() != 2) throw ParseError(source, row.number, "expected arrival_s,movement");
    const double t = parse_double(row.fields[0], source, row.number);
    const auto m = parse_int(row.fields[1], source, row.number);
    if (m < 1) throw ParseError(source, row.number, "movement indices are 1-based");
    flow.arrivals.push_back({t, static_cast<std::size_t>(m - 1)});
  }
  if (!header_seen) throw ParseError(source, 1, "missing header 'arrival_s,movement'");
  return flow;
}

FlowSpec load_flow(const std::filesystem::path& csv) {
  auto in = open_input(csv);
  FlowSpec flow = read_flow_csv(in, csv.string());
  flow.label = csv.stem().string();
  auto meta_path = csv;
  meta_path.replace_extension(".meta");
  if (std::filesystem::exists(meta_path)) {
    const auto kv = load_key_values(meta_path);
    const auto src = meta_path.string();
    auto get = [&](const char* key) -> const std::string* {
      const auto it = kv.find(key);
      return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("label")) flow.label = *v;
    if (auto v = get("base_label")) flow.provenance.base_label = *v;
    if (auto v = get("kind")) flow.provenance.kind = scenario_kind_from_string(*v);
    if (auto v = get("uniform_scale")) flow.provenance.uniform_scale = parse_double(*v, src, 0);
    if (auto v = get("half_range")) flow.provenance.half_range = parse_double(*v, src, 0);
    if (auto v = get("seed")) flow.provenance.seed = parse_u64(*v, src, 0);
    if (auto v = get("horizon")) flow.horizon_s = parse_double(*v, src, 0);
  }
  return flow;
}

void write_bases_csv(std::ostream& out, const std::vector<BaseDistribution>& bases) {
  if (bases.empty()) throw ArgumentError("no base distributions to write");
  out << "# schema=1\nlabel";
  for (std::size_t m = 0; m < bases.front().volumes.size(); ++m) out << ",mov" << m + 1;
  out << '\n';
  for (const auto& b : bases) {
    if (b.label.find(',') != std::string::npos) throw ArgumentError("labels may not contain commas");
    out << b.label;
    for (auto v : b.volumes) out << ',' << v;
    out << '\n';
  }
}

void save_bases(const std::filesystem::path& file, const std::vector<BaseDistribution>& bases) {
  auto out = open_output(file);
  write_bases_csv(out, bases);
}

std::vector<BaseDistribution> read_bases_csv(std::istream& in, const std::string& source) {
  const auto rows = read_csv(in, source);
  if (rows.empty() || rows.front().fields.empty() || rows.front().fields[0] != "label")
    throw ParseError(source, rows.empty() ? 1 : rows.front().number, "missing header 'label,mov1,...'");
  const std::size_t width = rows.front().fields.size();
  std::vector<BaseDistribution> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != width) throw ParseError(source, row.number, "column count mismatch");
    BaseDistribution b;
    b.label = row.fields[0];
    for (std::size_t c = 1; c < width; ++c) b.volumes.push_back(parse_int(row.fields[c], source, row.number));
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<BaseDistribution> load_bases(const std::filesystem::path& file) {
  auto in = open_input(file);
  return read_bases_csv(in, file.string());
}

void save_scenario_set(const std::filesystem::path& dir, const ScenarioSet& set) {
  std::filesystem::create_directories(dir);
  auto index = open_output(dir / "scenarios.csv");
  index << "# schema=1\n# kind=" << to_string(set.kind) << "\nindex,file,label,kind\n";
  for (std::size_t i = 0; i < set.scenarios.size(); ++i) {
    const auto& flow = set.scenarios[i];
    const auto file = fmt::format("scenario_{:03}.csv", i + 1);
    save_flow(dir / file, flow);
    index << fmt::format("{},{},{},{}\n", i + 1, file, flow.label, to_string(flow.provenance.kind));
  }
}

ScenarioSet load_scenario_set(const std::filesystem::path& dir) {
  const auto index_path = dir / "scenarios.csv";
  auto in = open_input(index_path);
  std::string first;
  ScenarioSet set;
  set.kind = ScenarioKind::kMixed;
  // Recover the set kind from the comment header before handing to read_csv.
  std::ostringstream rest;
  while (std::getline(in, first)) {
    const auto t = trim(first);
    if (t.rfind("# kind=", 0) == 0) set.kind = scenario_kind_from_string(trim(t.substr(7)));
    rest << first << '\n';
  }
  std::istringstream body(rest.str());
  const auto rows = read_csv(body, index_path.string());
  for (const auto& row : rows) {
    if (row.fields.size() == 4 && row.fields[0] == "index") continue;
    if (row.fields.size() != 4) throw ParseError(index_path.string(), row.number, "expected 4 fields");
    set.scenarios.push_back(load_flow(dir / row.fields[1]));
  }
  if (set.scenarios.empty()) throw ValidationError("scenario set '" + dir.string() + "' is empty");
  return set;
}

std::uint64_t scenario_digest(const ScenarioSet& set) {
  std::uint64_t h = fnv1a64("");
  for (const auto& flow : set.scenarios) {
    std::ostringstream ss;
    write_flow_csv(ss, flow);
    write_flow_meta(ss, flow);
    h = fnv1a64(ss.str(), h);
  }
  return h;
}

}  // namespace metashift
