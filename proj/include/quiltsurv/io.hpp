#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace quiltsurv::io {

/// Little-endian double array with a 4-byte tag and a format version.
void write_blob(const std::filesystem::path& path, std::string_view tag, std::uint32_t version,
                std::span<const double> values);
std::vector<double> read_blob(const std::filesystem::path& path, std::string_view tag,
                              std::uint32_t expected_version);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path);

/// Header-indexed CSV table; fields are kept as strings.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(std::string_view name) const;
  int require_column(std::string_view name) const;
};

std::vector<std::string> split_csv_line(std::string_view line);
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

/// Formats a double with 17 significant digits so CSV/JSON output round-trips.
std::string format_double(double value);

/// Days since 1970-01-01 for an ISO-8601 calendar date (YYYY-MM-DD).
int parse_iso_date(std::string_view text);
std::string format_iso_date(int day_index);

}  // namespace quiltsurv::io
