#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dynpred::csv {

// Minimal comma-separated reader: header row mandatory, no quoting, blank lines skipped.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Index of a header column, or npos.
  std::size_t column(const std::string& name) const;
};

Table read(std::istream& in, const std::string& source_name);
Table read_file(const std::string& path);

// Strict numeric parse; returns false on trailing garbage or empty input.
bool parse_double(const std::string& s, double& out);

// Round-trip formatting for doubles (shortest representation that parses back exactly).
std::string format_double(double v);

}  // namespace dynpred::csv
