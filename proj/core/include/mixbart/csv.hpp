#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mixbart {

// Plain comma-separated text with a header line. Fields never contain commas
// or quotes in the files this library writes; quoted fields are accepted on
// input.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name; throws DataError when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::istream& in, std::string_view source = "<stream>");
void write_csv(const std::filesystem::path& path, const CsvTable& table);
void write_csv(std::ostream& out, const CsvTable& table);

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view context = {});
std::int64_t parse_int(std::string_view text, std::string_view context = {});

}  // namespace mixbart
