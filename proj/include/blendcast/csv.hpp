#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace blendcast {

// Minimal comma-separated reader. Supports double-quoted fields with "" escapes;
// no embedded newlines.
struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name) const;
};

std::vector<std::string> split_csv_line(std::string_view line);

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text, const std::string& source = "<memory>");

// Strict numeric field parsing; throws ParseError naming the row.
double parse_double(const CsvTable& table, std::size_t row, std::string_view field);
long long parse_integer(const CsvTable& table, std::size_t row, std::string_view field);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

}  // namespace blendcast
