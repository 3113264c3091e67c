#include "haluprobe/feature_table.h"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.h"
#include "haluprobe/errors.h"

namespace haluprobe {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string LayoutEntry::name() const {
  std::string s(feature_name(feature));
  if (layer >= 0) s += "_L" + std::to_string(layer);
  if (head >= 0) s += "_H" + std::to_string(head);
  if (dim >= 0) s += "_D" + std::to_string(dim);
  return s;
}

void FeatureTable::add_row(TokenUnit unit, std::span<const double> values) {
  if (values.size() != cols()) {
    throw LayoutError("row has " + std::to_string(values.size()) +
                      " values, layout has " + std::to_string(cols()));
  }
  units_.push_back(std::move(unit));
  values_.insert(values_.end(), values.begin(), values.end());
}

void FeatureTable::append(const FeatureTable& other) {
  if (other.layout_ != layout_) {
    throw LayoutError("cannot append tables with different layouts");
  }
  units_.insert(units_.end(), other.units_.begin(), other.units_.end());
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
}

FeatureTable FeatureTable::subset(std::span<const std::size_t> indices) const {
  FeatureTable out(layout_, strategy_);
  for (std::size_t i : indices) {
    if (i >= rows()) throw BoundsError("row index out of range");
    out.add_row(units_[i], row(i));
  }
  return out;
}

FeatureTable FeatureTable::select_traces(
    const std::vector<std::string>& trace_ids) const {
  const std::unordered_set<std::string> keep(trace_ids.begin(), trace_ids.end());
  FeatureTable out(layout_, strategy_);
  for (std::size_t i = 0; i < rows(); ++i) {
    if (keep.count(units_[i].trace_id)) out.add_row(units_[i], row(i));
  }
  return out;
}

FeatureTable FeatureTable::select_features(
    const std::vector<FeatureId>& features) const {
  std::vector<std::size_t> cols;
  FeatureLayout layout;
  for (std::size_t j = 0; j < layout_.size(); ++j) {
    if (std::find(features.begin(), features.end(), layout_[j].feature) !=
        features.end()) {
      cols.push_back(j);
      layout.push_back(layout_[j]);
    }
  }
  if (cols.empty()) throw LayoutError("no columns for the requested features");
  FeatureTable out(std::move(layout), strategy_);
  std::vector<double> r(cols.size());
  for (std::size_t i = 0; i < rows(); ++i) {
    const auto src = row(i);
    for (std::size_t k = 0; k < cols.size(); ++k) r[k] = src[cols[k]];
    out.add_row(units_[i], r);
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string feature_table_csv(const FeatureTable& table) {
  std::string out;
  for (const auto& e : table.layout()) out += e.name() + ",";
  out += "unit_start,unit_end,trace_id,label\n";
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (double v : table.row(i)) out += format_value(v) + ",";
    const auto& u = table.unit(i);
    out += std::to_string(u.range.start) + "," + std::to_string(u.range.end) +
           "," + csv_field(u.trace_id) + "," + std::string(label_name(u.label)) +
           "\n";
  }
  return out;
}

std::uint64_t row_hash(const FeatureTable& table, std::size_t i) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= p[k];
      h *= 0x100000001b3ULL;
    }
  };
  const auto& u = table.unit(i);
  mix(u.trace_id.data(), u.trace_id.size());
  mix(&u.range.start, sizeof u.range.start);
  mix(&u.range.end, sizeof u.range.end);
  const auto r = table.row(i);
  mix(r.data(), r.size_bytes());
  return h;
}

void save_feature_table(const FeatureTable& table, const fs::path& dir) {
  detail::ensure_dir(dir);
  ordered_json j;
  j["format_version"] = 1;
  j["strategy"] = table.strategy();
  j["rows"] = table.rows();
  ordered_json layout = ordered_json::array();
  for (const auto& e : table.layout()) {
    layout.push_back({{"feature", std::string(feature_name(e.feature))},
                      {"layer", e.layer},
                      {"head", e.head},
                      {"dim", e.dim}});
  }
  j["layout"] = layout;
  ordered_json units = ordered_json::array();
  for (const auto& u : table.units()) {
    units.push_back({{"trace_id", u.trace_id},
                     {"start", u.range.start},
                     {"end", u.range.end},
                     {"label", std::string(label_name(u.label))}});
  }
  j["units"] = units;

  std::vector<float> f(table.values().begin(), table.values().end());
  std::vector<char> blob;
  detail::append_f32(blob, f);
  detail::write_file(dir / "features.bin", blob);
  detail::write_text(dir / "features.json", j.dump(2) + "\n");
  detail::write_text(dir / "features.csv", feature_table_csv(table));
}

FeatureTable load_feature_table(const fs::path& dir) {
  const fs::path json_path = dir / "features.json";
  const auto text = detail::read_file(json_path);
  ordered_json j;
  try {
    j = ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string(), 0, e.what());
  }
  FeatureLayout layout;
  std::vector<TokenUnit> units;
  std::string strategy;
  try {
    if (j.at("format_version").get<int>() != 1) {
      throw UnsupportedVersionError("feature table version " +
                                    j.at("format_version").dump());
    }
    strategy = j.at("strategy").get<std::string>();
    for (const auto& e : j.at("layout")) {
      layout.push_back({parse_feature(e.at("feature").get<std::string>()),
                        e.at("layer").get<int>(), e.at("head").get<int>(),
                        e.at("dim").get<int>()});
    }
    for (const auto& u : j.at("units")) {
      units.push_back({u.at("trace_id").get<std::string>(),
                       {u.at("start").get<int>(), u.at("end").get<int>()},
                       parse_label(u.at("label").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string(), 0, e.what());
  } catch (const ConfigError& e) {
    throw FormatError(json_path.string(), 0, e.what());
  }

  const fs::path bin_path = dir / "features.bin";
  const auto blob = detail::read_file(bin_path);
  const std::size_t expected = units.size() * layout.size() * 4;
  if (blob.size() != expected) {
    throw FormatError(bin_path.string(), std::min(blob.size(), expected),
                      "expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(blob.size()));
  }
  const auto f = detail::decode_f32(blob.data(), blob.size() / 4);
  FeatureTable table(std::move(layout), std::move(strategy));
  std::vector<double> row(table.cols());
  for (std::size_t i = 0; i < units.size(); ++i) {
    std::copy_n(f.begin() + i * table.cols(), table.cols(), row.begin());
    table.add_row(std::move(units[i]), row);
  }
  return table;
}

}  // namespace haluprobe
