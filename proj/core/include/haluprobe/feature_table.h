#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "haluprobe/feature_id.h"
#include "haluprobe/selection.h"

namespace haluprobe {

// Describes one column of a feature vector. -1 marks an unused axis.
struct LayoutEntry {
  FeatureId feature = FeatureId::kLookbackRatio;
  int layer = -1;
  int head = -1;
  int dim = -1;

  std::string name() const;
  bool operator==(const LayoutEntry&) const = default;
};

using FeatureLayout = std::vector<LayoutEntry>;

// Row-major matrix of unit feature vectors plus the unit each row came from.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(FeatureLayout layout, std::string strategy)
      : layout_(std::move(layout)), strategy_(std::move(strategy)) {}

  const FeatureLayout& layout() const { return layout_; }
  const std::string& strategy() const { return strategy_; }
  std::size_t rows() const { return units_.size(); }
  std::size_t cols() const { return layout_.size(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * cols(), cols());
  }
  const TokenUnit& unit(std::size_t i) const { return units_[i]; }
  const std::vector<TokenUnit>& units() const { return units_; }
  const std::vector<double>& values() const { return values_; }

  // Throws LayoutError if values.size() != cols().
  void add_row(TokenUnit unit, std::span<const double> values);
  void append(const FeatureTable& other);

  // Rows whose indices are listed, in that order.
  FeatureTable subset(std::span<const std::size_t> indices) const;
  // Rows of the given traces, in table order.
  FeatureTable select_traces(const std::vector<std::string>& trace_ids) const;
  // Columns of the listed features, in layout order.
  FeatureTable select_features(const std::vector<FeatureId>& features) const;

  bool operator==(const FeatureTable&) const = default;

 private:
  FeatureLayout layout_;
  std::string strategy_;
  std::vector<TokenUnit> units_;
  std::vector<double> values_;
};

// Writes features.csv (header = layout names, then unit_start, unit_end,
// trace_id, label), features.bin (binary32 LE, row-major) and features.json
// (layout, units, strategy).
void save_feature_table(const FeatureTable& table,
                        const std::filesystem::path& dir);
// Reads features.json + features.bin. Values come back at binary32 precision.
FeatureTable load_feature_table(const std::filesystem::path& dir);

std::string feature_table_csv(const FeatureTable& table);

// FNV-1a hash of a row's unit (trace id, range) and values. Used to audit
// which rows a fitted object has seen.
std::uint64_t row_hash(const FeatureTable& table, std::size_t i);

}  // namespace haluprobe
