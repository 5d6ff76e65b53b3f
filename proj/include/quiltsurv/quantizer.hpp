#pragma once

// Percentile-threshold quantization of numeric features into binary indicators.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace quiltsurv {

/// {10, 20, ..., 90}.
std::vector<double> default_percentile_grid();

/// Upper nearest-rank percentile of sorted data: the value at 1-based rank
/// floor(P n / 100) + 1, clipped to n.
double nearest_rank_percentile(std::span<const double> sorted, double percentile);

/// Distinct empirical percentiles of `column` above its minimum, ascending. Constant
/// columns give no cutoffs. Throws DataError on NaN.
std::vector<double> fit_cutoffs(std::span<const double> column, std::span<const double> percentile_grid);

/// bit j = 1 iff value >= cutoffs[j].
std::vector<std::uint8_t> encode(double value, std::span<const double> cutoffs);

struct FeatureCutoffs {
  std::string name;
  std::vector<double> cutoffs;
  std::vector<std::string> columns;  // one output column per cutoff
};

struct QuantizationMap {
  std::vector<double> percentile_grid;
  std::vector<FeatureCutoffs> features;  // dropped features are kept with no cutoffs

  std::size_t total_columns() const;
  std::vector<std::string> column_names() const;
  const FeatureCutoffs* find(std::string_view name) const;
};

nlohmann::json quantization_map_to_json(const QuantizationMap& map);
QuantizationMap quantization_map_from_json(const nlohmann::json& j);

/// Named numeric columns of equal length.
struct NumericTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  void validate() const;
};

/// Every CSV column parsed as a number; empty or unparsable fields become NaN.
NumericTable read_numeric_csv(const std::filesystem::path& path);

struct QuantizationReport {
  std::vector<std::string> dropped_constant;
  struct Dedup {
    std::string name;
    std::size_t removed = 0;  // grid percentiles that collapsed onto another cutoff
  };
  std::vector<Dedup> deduplicated;
};

nlohmann::json quantization_report_to_json(const QuantizationReport& report);

QuantizationMap fit_quantization(const NumericTable& table, std::span<const double> percentile_grid,
                                 QuantizationReport* report = nullptr);

/// Row-major 0/1 matrix with `cols` columns.
struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::string> names;
  std::vector<std::uint8_t> data;

  std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const std::uint8_t> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Throws DataError if the table has a column the map does not know, or lacks one it uses.
BinaryMatrix transform_table(const NumericTable& table, const QuantizationMap& map);

void write_binary_csv(const std::filesystem::path& path, const BinaryMatrix& m);

}  // namespace quiltsurv
