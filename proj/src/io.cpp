#include "quiltsurv/io.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include "quiltsurv/common.hpp"

namespace quiltsurv::io {

static_assert(std::endian::native == std::endian::little,
              "blob format assumes a little-endian host");

void write_blob(const std::filesystem::path& path, std::string_view tag, std::uint32_t version,
                std::span<const double> values) {
  if (tag.size() != 4) throw std::invalid_argument("blob tag must be 4 bytes");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::uint64_t count = values.size();
  out.write(tag.data(), 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<double> read_blob(const std::filesystem::path& path, std::string_view tag,
                              std::uint32_t expected_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || std::string_view(magic, 4) != tag)
    throw DataError(path.string() + ": not a '" + std::string(tag) + "' blob");
  if (version != expected_version)
    throw DataError(path.string() + ": unsupported blob version " + std::to_string(version));
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw DataError(path.string() + ": truncated blob");
  return values;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

int CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(std::string_view name) const {
  const int c = column(name);
  if (c < 0) throw DataError("missing CSV column '" + std::string(name) + "'");
  return c;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV input");
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.header.size())
      throw DataError("CSV row " + std::to_string(table.rows.size() + 2) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv(in);
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

int parse_iso_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  auto parse = [&](std::size_t pos, std::size_t len, int& v) {
    auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    return ec == std::errc() && p == text.data() + pos + len;
  };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-' || !parse(0, 4, y) ||
      !parse(5, 2, m) || !parse(8, 2, d))
    throw DataError("bad ISO date '" + std::string(text) + "'");
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(m),
                                        std::chrono::day(d)};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return static_cast<int>(std::chrono::sys_days(ymd).time_since_epoch().count());
}

std::string format_iso_date(int day_index) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days(std::chrono::days(day_index))};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace quiltsurv::io
