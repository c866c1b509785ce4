#pragma once

// Small helpers for the line-oriented CSV and key=value formats.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace metashift {

inline constexpr int kSchemaVersion = 1;

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view line, char sep = ',');

double parse_double(const std::string& text, const std::string& source, std::size_t line);
std::int64_t parse_int(const std::string& text, const std::string& source, std::size_t line);
std::uint64_t parse_u64(const std::string& text, const std::string& source, std::size_t line);

/// Non-comment, non-blank lines of a CSV file together with their 1-based
/// line numbers. A `# schema=N` comment, if present, must name version 1.
struct CsvLine {
  std::size_t number = 0;
  std::vector<std::string> fields;
};
std::vector<CsvLine> read_csv(std::istream& in, const std::string& source);

/// `key=value` lines; `#` starts a comment. `schema` may appear either as a
/// key or as a `# schema=N` comment and is validated, then dropped.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(std::istream& in, const std::string& source);
KeyValues load_key_values(const std::filesystem::path& file);

/// Opens a file or throws IoError.
std::ifstream open_input(const std::filesystem::path& file);
std::ofstream open_output(const std::filesystem::path& file);
std::string read_file(const std::filesystem::path& file);

/// Shortest decimal text that parses back to the same double.
std::string format_exact(double value);

}  // namespace metashift
