#include "quiltsurv/quantizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "quiltsurv/common.hpp"
#include "quiltsurv/io.hpp"

namespace quiltsurv {

std::vector<double> default_percentile_grid() {
  std::vector<double> grid;
  for (int p = 10; p <= 90; p += 10) grid.push_back(p);
  return grid;
}

double nearest_rank_percentile(std::span<const double> sorted, double percentile) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty data");
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::floor(percentile * static_cast<double>(n) / 100.0)) + 1;
  rank = std::min(rank, n);
  return sorted[rank - 1];
}

std::vector<double> fit_cutoffs(std::span<const double> column, std::span<const double> grid) {
  if (column.empty()) throw std::invalid_argument("cannot fit cutoffs on an empty column");
  for (double p : grid)
    if (!(p > 0.0 && p < 100.0)) throw std::invalid_argument("percentiles must lie in (0, 100)");
  std::vector<double> sorted(column.begin(), column.end());
  for (double v : sorted)
    if (std::isnan(v)) throw DataError("NaN in column passed to the quantizer; impute upstream");
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  std::vector<double> cuts;
  for (double p : grid) {
    const double c = nearest_rank_percentile(sorted, p);
    // A cutoff at the minimum would produce an all-ones column.
    if (c > lo) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

std::vector<std::uint8_t> encode(double value, std::span<const double> cutoffs) {
  std::vector<std::uint8_t> bits(cutoffs.size());
  for (std::size_t j = 0; j < cutoffs.size(); ++j) bits[j] = value >= cutoffs[j] ? 1 : 0;
  return bits;
}

std::size_t QuantizationMap::total_columns() const {
  std::size_t n = 0;
  for (const auto& f : features) n += f.cutoffs.size();
  return n;
}

std::vector<std::string> QuantizationMap::column_names() const {
  std::vector<std::string> out;
  for (const auto& f : features) out.insert(out.end(), f.columns.begin(), f.columns.end());
  return out;
}

const FeatureCutoffs* QuantizationMap::find(std::string_view name) const {
  for (const auto& f : features)
    if (f.name == name) return &f;
  return nullptr;
}

nlohmann::json quantization_map_to_json(const QuantizationMap& map) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : map.features)
    features.push_back({{"name", f.name}, {"cutoffs", f.cutoffs}, {"columns", f.columns}});
  return {{"format", "quantization-map"}, {"percentile_grid", map.percentile_grid}, {"features", features}};
}

QuantizationMap quantization_map_from_json(const nlohmann::json& j) {
  QuantizationMap map;
  map.percentile_grid = j.value("percentile_grid", std::vector<double>{});
  for (const auto& f : j.at("features")) {
    FeatureCutoffs fc;
    fc.name = f.at("name").get<std::string>();
    fc.cutoffs = f.at("cutoffs").get<std::vector<double>>();
    fc.columns = f.at("columns").get<std::vector<std::string>>();
    if (fc.columns.size() != fc.cutoffs.size())
      throw DataError("quantization map: column/cutoff count mismatch for " + fc.name);
    for (std::size_t k = 1; k < fc.cutoffs.size(); ++k)
      if (!(fc.cutoffs[k] > fc.cutoffs[k - 1]))
        throw DataError("quantization map: cutoffs not strictly increasing for " + fc.name);
    map.features.push_back(std::move(fc));
  }
  return map;
}

void NumericTable::validate() const {
  if (names.size() != columns.size()) throw std::invalid_argument("table names/columns mismatch");
  for (const auto& c : columns)
    if (c.size() != rows()) throw std::invalid_argument("table columns have unequal length");
}

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  const auto csv = io::read_csv(path);
  NumericTable t;
  t.names = csv.header;
  t.columns.assign(csv.header.size(), {});
  for (const auto& row : csv.rows) {
    if (row.size() != csv.header.size()) throw DataError("ragged CSV row in " + path.string());
    for (std::size_t c = 0; c < row.size(); ++c) {
      double v = std::numeric_limits<double>::quiet_NaN();
      const auto& s = row[c];
      if (!s.empty()) {
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) v = std::numeric_limits<double>::quiet_NaN();
      }
      t.columns[c].push_back(v);
    }
  }
  return t;
}

nlohmann::json quantization_report_to_json(const QuantizationReport& r) {
  nlohmann::json dedup = nlohmann::json::array();
  for (const auto& d : r.deduplicated) dedup.push_back({{"name", d.name}, {"removed", d.removed}});
  return {{"dropped_constant", r.dropped_constant}, {"deduplicated", dedup}};
}

QuantizationMap fit_quantization(const NumericTable& table, std::span<const double> grid,
                                 QuantizationReport* report) {
  table.validate();
  if (table.rows() == 0) throw DataError("cannot fit a quantization map on an empty table");
  QuantizationMap map;
  map.percentile_grid.assign(grid.begin(), grid.end());
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    FeatureCutoffs f;
    f.name = table.names[c];
    try {
      f.cutoffs = fit_cutoffs(table.columns[c], grid);
    } catch (const DataError& e) {
      throw DataError("feature " + f.name + ": " + e.what());
    }
    for (double cut : f.cutoffs) f.columns.push_back(f.name + ">=" + io::format_double(cut));
    if (report) {
      if (f.cutoffs.empty())
        report->dropped_constant.push_back(f.name);
      else if (f.cutoffs.size() < grid.size())
        report->deduplicated.push_back({f.name, grid.size() - f.cutoffs.size()});
    }
    map.features.push_back(std::move(f));
  }
  return map;
}

BinaryMatrix transform_table(const NumericTable& table, const QuantizationMap& map) {
  table.validate();
  for (const auto& name : table.names)
    if (!map.find(name)) throw DataError("feature not present in the quantization map: " + name);
  BinaryMatrix m;
  m.rows = table.rows();
  m.cols = map.total_columns();
  m.names = map.column_names();
  m.data.assign(m.rows * m.cols, 0);
  std::size_t col = 0;
  for (const auto& f : map.features) {
    if (f.cutoffs.empty()) continue;
    auto it = std::find(table.names.begin(), table.names.end(), f.name);
    if (it == table.names.end()) throw DataError("table is missing mapped feature: " + f.name);
    const auto& values = table.columns[static_cast<std::size_t>(it - table.names.begin())];
    for (std::size_t r = 0; r < m.rows; ++r) {
      if (std::isnan(values[r])) throw DataError("NaN in feature " + f.name);
      for (std::size_t k = 0; k < f.cutoffs.size(); ++k)
        m.data[r * m.cols + col + k] = values[r] >= f.cutoffs[k] ? 1 : 0;
    }
    col += f.cutoffs.size();
  }
  return m;
}

void write_binary_csv(const std::filesystem::path& path, const BinaryMatrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << m.names[c];
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << int(m.at(r, c));
    out << '\n';
  }
}

}  // namespace quiltsurv
