#include "metashift/textio.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "metashift/error.hpp"

namespace metashift {

namespace {

void check_schema_comment(const std::string& line, const std::string& source, std::size_t number) {
  const auto body = trim(std::string_view(line).substr(1));
  if (body.rfind("schema=", 0) != 0) return;
  const auto version = parse_int(body.substr(7), source, number);
  if (version != kSchemaVersion)
    throw ParseError(source, number, fmt::format("unsupported schema version {}", version));
}

}  // namespace

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& text, const std::string& source, std::size_t line) {
  if (text.empty()) throw ParseError(source, line, "expected a number, got an empty field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE)
    throw ParseError(source, line, "expected a number, got '" + text + "'");
  return v;
}

std::int64_t parse_int(const std::string& text, const std::string& source, std::size_t line) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ParseError(source, line, "expected an integer, got '" + text + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& source, std::size_t line) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ParseError(source, line, "expected an unsigned integer, got '" + text + "'");
  return v;
}

std::vector<CsvLine> read_csv(std::istream& in, const std::string& source) {
  std::vector<CsvLine> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      check_schema_comment(t, source, number);
      continue;
    }
    rows.push_back({number, split(t)});
  }
  return rows;
}

KeyValues read_key_values(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      check_schema_comment(t, source, number);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, number, "expected key=value");
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ParseError(source, number, "empty key");
    if (key == "schema") {
      if (parse_int(value, source, number) != kSchemaVersion)
        throw ParseError(source, number, "unsupported schema version " + value);
      continue;
    }
    if (!kv.emplace(key, value).second) throw ParseError(source, number, "duplicate key '" + key + "'");
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& file) {
  auto in = open_input(file);
  return read_key_values(in, file.string());
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + file.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& file) {
  if (file.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + file.string() + "' for writing");
  return out;
}

std::string read_file(const std::filesystem::path& file) {
  auto in = open_input(file);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_exact(double value) { return fmt::format("{}", value); }

}  // namespace metashift
