#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dyhgn::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name; throws ValidationError when absent.
  std::size_t column(std::string_view name) const;
};

// Plain comma-separated text without quoting; blank lines are skipped.
Table read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Table& table);

std::vector<std::string> split(std::string_view line);

// Shortest representation that parses back to the same double.
std::string format(double value);
double parse_double(std::string_view field, std::string_view context);
long long parse_int(std::string_view field, std::string_view context);

}  // namespace dyhgn::csv
