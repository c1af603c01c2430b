#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace svyconform::csv {

/// Comma-separated table with a header row. Fields may be double-quoted;
/// embedded quotes are doubled ("").
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

void write_row(std::ostream& out, const std::vector<std::string>& fields);
void write(std::ostream& out, const Table& table);
void write_file(const std::string& path, const Table& table);

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

/// Parses a double, accepting "inf"/"-inf". Returns nullopt on empty or
/// malformed text.
std::optional<double> parse_double(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);

}  // namespace svyconform::csv
