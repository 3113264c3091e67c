#include "haluprobe/eval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.h"
#include "haluprobe/errors.h"
#include "parallel.h"

namespace haluprobe::eval {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

double Metrics::accuracy() const {
  return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / total();
}

std::optional<double> Metrics::recall_halu() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / (tp + fn);
}

std::optional<double> Metrics::recall_fact() const {
  if (tn + fp == 0) return std::nullopt;
  return static_cast<double>(tn) / (tn + fp);
}

void Metrics::add(Label truth, Label predicted) {
  if (truth == Label::kUnlabeled) {
    throw ConfigError("cannot score an unlabeled unit");
  }
  const bool t = truth == Label::kHallucinated;
  const bool p = predicted == Label::kHallucinated;
  if (t && p) ++tp;
  else if (t) ++fn;
  else if (p) ++fp;
  else ++tn;
}

ResponseLabels response_labels(const TraceSet& set) {
  ResponseLabels labels;
  for (const auto& tr : set.traces) labels[tr.trace_id] = tr.label;
  return labels;
}

Evaluation evaluate(const detect::DetectorModel& model,
                    const FeatureTable& table, double threshold,
                    const ResponseLabels& labels) {
  const SelectionStrategy strategy = parse_strategy(table.strategy());
  const auto probs = detect::predict(model, table);

  Evaluation ev;
  const bool multi = strategy.kind == StrategyKind::kPerToken ||
                     strategy.kind == StrategyKind::kSlicedWindow;
  if (multi) ev.unit = Metrics{};

  // Rows of one response are contiguous in extraction order, but group by id
  // so subsets in any order still work.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto& u = table.unit(i);
    auto [it, inserted] = groups.try_emplace(u.trace_id);
    if (inserted) order.push_back(u.trace_id);
    it->second.push_back(i);
    if (multi) {
      ev.unit->add(u.label,
                   probs[i] >= threshold ? Label::kHallucinated : Label::kFactual);
    }
  }
  for (const auto& id : order) {
    std::vector<UnitPrediction> preds;
    Label derived = Label::kFactual;
    for (std::size_t i : groups[id]) {
      preds.push_back({probs[i], table.unit(i).range});
      if (table.unit(i).label == Label::kHallucinated) derived = Label::kHallucinated;
      if (table.unit(i).label == Label::kUnlabeled) derived = Label::kUnlabeled;
    }
    Label truth = derived;
    if (!labels.empty()) {
      const auto it = labels.find(id);
      if (it == labels.end()) {
        throw ConfigError("no response label for trace '" + id + "'");
      }
      truth = it->second;
    }
    const auto decision = aggregate_decision(preds, strategy, threshold);
    ev.response.add(truth, decision.label);
  }
  return ev;
}

Split stratified_split(const TraceSet& set, double test_fraction,
                       std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must be in (0,1)");
  }
  std::vector<std::size_t> halu, fact;
  for (std::size_t i = 0; i < set.traces.size(); ++i) {
    switch (set.traces[i].label) {
      case Label::kHallucinated:
        halu.push_back(i);
        break;
      case Label::kFactual:
        fact.push_back(i);
        break;
      case Label::kUnlabeled:
        throw ConfigError("cannot split: trace '" + set.traces[i].trace_id +
                          "' is unlabeled");
    }
  }
  std::vector<char> is_test(set.traces.size(), 0);
  std::mt19937_64 rng(seed);
  for (auto* cls : {&halu, &fact}) {
    std::shuffle(cls->begin(), cls->end(), rng);
    const auto k = static_cast<std::size_t>(
        std::llround(static_cast<double>(cls->size()) * test_fraction));
    for (std::size_t j = 0; j < k; ++j) is_test[(*cls)[j]] = 1;
  }
  Split s;
  for (std::size_t i = 0; i < set.traces.size(); ++i) {
    (is_test[i] ? s.test_ids : s.train_ids).push_back(set.traces[i].trace_id);
  }
  return s;
}

namespace {

std::vector<std::uint64_t> hashes(const FeatureTable& t) {
  std::vector<std::uint64_t> h(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) h[i] = row_hash(t, i);
  return h;
}

struct CellResult {
  Evaluation evaluation;
  std::string error;
  CellAudit audit;
};

CellResult train_and_score(const FeatureTable& train, const FeatureTable& test,
                           detect::Family family, const ExperimentConfig& c,
                           const ResponseLabels& labels, std::string cell) {
  CellResult r;
  r.audit.cell = std::move(cell);
  try {
    detect::TrainLog log;
    const auto model = detect::train(family, train, c.train, c.audit ? &log : nullptr);
    r.evaluation = evaluate(model, test, c.threshold, labels);
    if (c.audit) {
      r.audit.fitted_rows = std::move(log.fitted_rows);
      r.audit.tested_rows = hashes(test);
    }
  } catch (const std::exception& e) {
    r.error = describe_error(e);
  }
  return r;
}

}  // namespace

AblationReport run_ablation(const TraceSet& set,
                            const SelectionStrategy& strategy,
                            const std::vector<detect::Family>& families,
                            const features::FeatureConfig& fconfig,
                            const ExperimentConfig& config) {
  if (families.empty()) throw ConfigError("ablation needs at least one family");
  const Split split = stratified_split(set, config.test_fraction, config.split_seed);
  const FeatureTable table =
      features::extract_feature_table(set, fconfig, strategy, config.workers);
  const FeatureTable train_all = table.select_traces(split.train_ids);
  const FeatureTable test_all = table.select_traces(split.test_ids);
  const ResponseLabels labels = response_labels(set);

  std::vector<FeatureId> feats;
  for (FeatureId f : kAllFeatures) {
    if (std::find(fconfig.enabled.begin(), fconfig.enabled.end(), f) !=
        fconfig.enabled.end()) {
      feats.push_back(f);
    }
  }
  AblationReport report;
  report.strategy = strategy_string(strategy);
  report.rows.resize(feats.size() * families.size());
  std::vector<CellAudit> audits(report.rows.size());
  detail::parallel_for(static_cast<int>(report.rows.size()), config.workers,
                       [&](int k) {
    const FeatureId f = feats[k / families.size()];
    const detect::Family fam = families[k % families.size()];
    auto& row = report.rows[k];
    row.feature = f;
    row.family = fam;
    const auto train = train_all.select_features({f});
    const auto test = test_all.select_features({f});
    auto r = train_and_score(train, test, fam, config, labels,
                             std::string(feature_name(f)) + "/" +
                                 std::string(detect::family_name(fam)));
    row.evaluation = r.evaluation;
    row.error = std::move(r.error);
    audits[k] = std::move(r.audit);
  });
  if (config.audit) report.audit = std::move(audits);
  return report;
}

TokenStudyReport run_token_study(
    const TraceSet& set, const std::vector<SelectionStrategy>& strategies,
    detect::Family family, const features::FeatureConfig& fconfig,
    const ExperimentConfig& config) {
  if (strategies.empty()) throw ConfigError("token study needs a strategy");
  for (const auto& s : strategies) validate_strategy(s);
  const Split split = stratified_split(set, config.test_fraction, config.split_seed);
  const ResponseLabels labels = response_labels(set);
  TokenStudyReport report;
  report.family = family;
  report.rows.resize(strategies.size());
  std::vector<CellAudit> audits(strategies.size());
  detail::parallel_for(static_cast<int>(strategies.size()), config.workers,
                       [&](int k) {
    auto& row = report.rows[k];
    row.strategy = strategy_string(strategies[k]);
    try {
      const FeatureTable table =
          features::extract_feature_table(set, fconfig, strategies[k], 1);
      const auto train = table.select_traces(split.train_ids);
      const auto test = table.select_traces(split.test_ids);
      row.train_units = train.rows();
      auto r = train_and_score(train, test, family, config, labels, row.strategy);
      row.evaluation = r.evaluation;
      row.error = std::move(r.error);
      audits[k] = std::move(r.audit);
    } catch (const std::exception& e) {
      row.error = describe_error(e);
    }
  });
  if (config.audit) report.audit = std::move(audits);
  return report;
}

TransferReport run_transfer(const std::vector<NamedSet>& train_sets,
                            const std::vector<NamedSet>& test_sets,
                            const features::FeatureConfig& fconfig,
                            detect::Family family,
                            const SelectionStrategy& strategy,
                            const ExperimentConfig& config) {
  if (train_sets.empty()) throw ConfigError("transfer needs a training set");
  if (test_sets.empty()) throw ConfigError("transfer needs a test set");

  struct Prepared {
    FeatureTable train;
    FeatureTable test;
    ResponseLabels labels;
  };
  std::map<std::string, const TraceSet*> by_name;
  for (const auto* list : {&train_sets, &test_sets}) {
    for (const auto& ns : *list) {
      if (!ns.set) throw ConfigError("transfer set '" + ns.name + "' is null");
      auto [it, inserted] = by_name.emplace(ns.name, ns.set);
      if (!inserted && it->second != ns.set) {
        throw ConfigError("two different sets are named '" + ns.name + "'");
      }
    }
  }
  std::vector<std::string> names;
  for (const auto& [name, _] : by_name) names.push_back(name);
  std::vector<Prepared> prepared(names.size());
  detail::parallel_for(static_cast<int>(names.size()), config.workers, [&](int k) {
    const TraceSet& set = *by_name.at(names[k]);
    const Split split = stratified_split(set, config.test_fraction, config.split_seed);
    const FeatureTable table =
        features::extract_feature_table(set, fconfig, strategy, 1);
    prepared[k] = {table.select_traces(split.train_ids),
                   table.select_traces(split.test_ids), response_labels(set)};
  });
  auto prep = [&](const std::string& name) -> const Prepared& {
    return prepared[std::lower_bound(names.begin(), names.end(), name) -
                    names.begin()];
  };

  std::vector<std::optional<detect::DetectorModel>> models(train_sets.size());
  std::vector<std::string> errors(train_sets.size());
  std::vector<std::vector<std::uint64_t>> fitted(train_sets.size());
  detail::parallel_for(static_cast<int>(train_sets.size()), config.workers,
                       [&](int k) {
    try {
      detect::TrainLog log;
      models[k] = detect::train(family, prep(train_sets[k].name).train,
                                config.train, config.audit ? &log : nullptr);
      fitted[k] = std::move(log.fitted_rows);
    } catch (const std::exception& e) {
      errors[k] = describe_error(e);
    }
  });

  TransferReport report;
  report.family = family;
  report.strategy = strategy_string(strategy);
  for (std::size_t a = 0; a < train_sets.size(); ++a) {
    for (const auto& ts : test_sets) {
      TransferCell cell;
      cell.train = train_sets[a].name;
      cell.test = ts.name;
      cell.diagonal = train_sets[a].set == ts.set;
      const Prepared& p = prep(ts.name);
      if (!models[a]) {
        cell.error = errors[a];
      } else {
        try {
          cell.metrics = evaluate(*models[a], p.test, config.threshold, p.labels).response;
        } catch (const std::exception& e) {
          cell.error = describe_error(e);
        }
      }
      if (config.audit) {
        report.audit.push_back({cell.train + "->" + cell.test, fitted[a],
                                hashes(p.test)});
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

// --- cohort curves ------------------------------------------------------------

namespace {

struct Moments {
  std::vector<double> mean;
  std::vector<double> se;
  std::size_t n = 0;
};

Moments column_moments(const std::vector<double>& values, std::size_t cols) {
  Moments m;
  m.n = cols == 0 ? 0 : values.size() / cols;
  m.mean.assign(cols, 0.0);
  m.se.assign(cols, 0.0);
  if (m.n == 0) return m;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m.mean[j] += values[i * cols + j];
  }
  for (double& x : m.mean) x /= static_cast<double>(m.n);
  if (m.n < 2) return m;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = values[i * cols + j] - m.mean[j];
      m.se[j] += c * c;
    }
  }
  for (double& x : m.se) {
    x = std::sqrt(x / static_cast<double>(m.n - 1) / static_cast<double>(m.n));
  }
  return m;
}

// Per-token values, one row per generated token, one column per point.
std::vector<double> curve_values(const TraceSet& set, FeatureId feature,
                                 Axis axis, int workers) {
  if (feature == FeatureId::kHiddenState) {
    if (!set.meta.sections.hidden) {
      throw ConfigError("hidden_state curves need the hidden section");
    }
    const int L = set.meta.num_layers;
    const int d = set.meta.hidden_dim;
    std::vector<std::vector<double>> parts(set.traces.size());
    detail::parallel_for(static_cast<int>(set.traces.size()), workers, [&](int i) {
      const auto& tr = set.traces[i];
      for (int t = 0; t < tr.gen_len; ++t) {
        for (int l = 0; l < L; ++l) {
          double sq = 0.0;
          for (float v : tr.hidden_state(set.meta, t, l)) sq += double(v) * v;
          parts[i].push_back(std::sqrt(sq / d));
        }
      }
    });
    std::vector<double> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  }
  features::FeatureConfig fc;
  fc.enabled = {feature};
  fc.head_granularity = axis == Axis::kHead ? features::HeadGranularity::kPerHead
                                            : features::HeadGranularity::kLayerMean;
  const auto table = features::extract_feature_table(
      set, fc, SelectionStrategy::per_token(), workers);
  return table.values();
}

}  // namespace

CohortCurve cohort_curves(const NamedSet& a, const NamedSet& b,
                          FeatureId feature, Axis axis, int workers) {
  if (!a.set || !b.set) throw ConfigError("cohort set is null");
  if (!(a.set->meta.num_layers == b.set->meta.num_layers &&
        a.set->meta.num_heads == b.set->meta.num_heads)) {
    throw ConfigError("cohorts must share layer and head counts");
  }
  if (axis == Axis::kHead && feature_group(feature) != FeatureGroup::kAttention) {
    throw ConfigError("the head axis needs an attention feature, got " +
                      std::string(feature_name(feature)));
  }
  const int L = a.set->meta.num_layers;
  const int H = a.set->meta.num_heads;
  const std::size_t cols = axis == Axis::kHead ? static_cast<std::size_t>(L) * H
                                               : static_cast<std::size_t>(L);
  CohortCurve curve;
  curve.feature = feature;
  curve.axis = axis;
  curve.cohort_a = a.name;
  curve.cohort_b = b.name;
  const Moments ma = column_moments(curve_values(*a.set, feature, axis, workers), cols);
  const Moments mb = column_moments(curve_values(*b.set, feature, axis, workers), cols);
  curve.units_a = ma.n;
  curve.units_b = mb.n;
  for (std::size_t j = 0; j < cols; ++j) {
    CohortPoint p;
    p.layer = axis == Axis::kHead ? static_cast<int>(j) / H : static_cast<int>(j);
    p.head = axis == Axis::kHead ? static_cast<int>(j) % H : -1;
    p.mean_a = ma.mean[j];
    p.se_a = ma.se[j];
    p.mean_b = mb.mean[j];
    p.se_b = mb.se[j];
    curve.points.push_back(p);
  }
  return curve;
}

CohortCurve cohort_curves(const TraceSet& set, FeatureId feature, Axis axis,
                          int workers) {
  TraceSet halu{set.meta, set.dataset_name + ":hallucinated", {}};
  TraceSet fact{set.meta, set.dataset_name + ":factual", {}};
  for (const auto& tr : set.traces) {
    if (tr.label == Label::kHallucinated) halu.traces.push_back(tr);
    else if (tr.label == Label::kFactual) fact.traces.push_back(tr);
  }
  return cohort_curves({"hallucinated", &halu}, {"factual", &fact}, feature, axis,
                       workers);
}

// --- overhead -------------------------------------------------------------------

namespace {

struct OverheadSpec {
  FeatureId feature;
  const char* category;
  const char* name;
  const char* storage_tex;
  const char* compute_tex;
  const char* storage;
  const char* compute;
};

constexpr OverheadSpec kOverheadTable[] = {
    {FeatureId::kLookbackRatio, "Attention", "Attention Lookback Ratio",
     "$O(w \\cdot H \\cdot L)$", "$O(w \\cdot H \\cdot L)$", "O(w·H·L)",
     "O(w·H·L)"},
    {FeatureId::kAttentionEntropy, "Attention", "Attention Allocation Sharpness",
     "$O(w \\cdot H \\cdot L)$", "$O(w \\cdot H \\cdot L \\cdot \\log w)$",
     "O(w·H·L)", "O(w·H·L·log w)"},
    {FeatureId::kHiddenState, "Activation", "Last Layer Hidden State",
     "$O(w \\cdot d)$", "$O(w \\cdot d)$", "O(w·d)", "O(w·d)"},
    {FeatureId::kActivationMapDiff, "Activation", "Activation Map",
     "$O(w \\cdot d \\cdot m)$", "$O(w \\cdot d \\cdot m)$", "O(w·d·m)",
     "O(w·d·m)"},
    {FeatureId::kActivationEntropy, "Activation", "Activation Entropy",
     "$O(w \\cdot m)$", "$O(w \\cdot m \\cdot \\log m)$", "O(w·m)",
     "O(w·m·log m)"},
    {FeatureId::kMinTokenProb, "Logit", "Min Token Probabilities",
     "$O(w \\cdot L)$", "$O(w \\cdot L)$", "O(w·L)", "O(w·L)"},
    {FeatureId::kMaxTokenRank, "Logit", "Max Token Ranks", "$O(w \\cdot L)$",
     "$O(w \\cdot L \\cdot \\log w)$", "O(w·L)", "O(w·L·log w)"},
    {FeatureId::kJointTokenProb, "Logit", "Joint Token Probabilities",
     "$O(w \\cdot L)$", "$O(w \\cdot L \\cdot w)$", "O(w·L)", "O(w·L·w)"},
};

constexpr std::size_t kMinStableTokens = 1000;

}  // namespace

std::vector<FeatureId> overhead_features() {
  std::vector<FeatureId> out;
  for (const auto& s : kOverheadTable) out.push_back(s.feature);
  return out;
}

std::vector<OverheadRow> bench_overhead(const TraceSet& set,
                                        const std::vector<FeatureId>& feats,
                                        int repetitions) {
  if (repetitions < 5) throw ConfigError("overhead timing needs >= 5 repetitions");
  std::size_t tokens = 0;
  for (const auto& tr : set.traces) tokens += tr.gen_len;
  if (tokens == 0) throw ConfigError("overhead timing needs a non-empty set");
  const auto strategy = SelectionStrategy::sliced(8, 4);
  std::vector<OverheadRow> rows;
  for (FeatureId f : feats) {
    const OverheadSpec* spec = nullptr;
    for (const auto& s : kOverheadTable) {
      if (s.feature == f) spec = &s;
    }
    if (!spec) {
      throw ConfigError(std::string(feature_name(f)) +
                        " is not part of the overhead table");
    }
    features::FeatureConfig fc;
    fc.enabled = {f};
    std::vector<double> secs;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto table = features::extract_feature_table(set, fc, strategy, 1);
      const auto t1 = std::chrono::steady_clock::now();
      if (table.rows() == 0) throw ConfigError("no units to time");
      secs.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::nth_element(secs.begin(), secs.begin() + secs.size() / 2, secs.end());
    OverheadRow row;
    row.feature = f;
    row.category = spec->category;
    row.name = spec->name;
    row.storage_tex = spec->storage_tex;
    row.compute_tex = spec->compute_tex;
    row.storage = spec->storage;
    row.compute = spec->compute;
    row.seconds_per_token = secs[secs.size() / 2] / static_cast<double>(tokens);
    row.repetitions = repetitions;
    row.tokens = tokens;
    if (tokens < kMinStableTokens) {
      row.warning = "set has " + std::to_string(tokens) +
                    " tokens; timings below 1000 tokens are unstable";
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- reports ----------------------------------------------------------------------

namespace {

ordered_json opt_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy()},
          {"recall_halu", opt_json(m.recall_halu())},
          {"recall_fact", opt_json(m.recall_fact())},
          {"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn}};
}

ordered_json evaluation_json(const Evaluation& e) {
  ordered_json j = {{"response", metrics_json(e.response)}};
  j["unit"] = e.unit ? metrics_json(*e.unit) : ordered_json(nullptr);
  return j;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::string csv_text(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string metrics_csv(const Metrics& m) {
  return num(m.accuracy()) + "," + num(m.recall_halu()) + "," +
         num(m.recall_fact()) + "," + std::to_string(m.tp) + "," +
         std::to_string(m.fp) + "," + std::to_string(m.tn) + "," +
         std::to_string(m.fn);
}

constexpr const char* kMetricsHeader =
    "accuracy,recall_halu,recall_fact,tp,fp,tn,fn";

void write_pair(const fs::path& dir, const std::string& stem,
                const ordered_json& j, const std::string& csv) {
  detail::ensure_dir(dir);
  detail::write_text(dir / (stem + ".json"), j.dump(2) + "\n");
  detail::write_text(dir / (stem + ".csv"), csv);
}

ordered_json audit_json(const std::vector<CellAudit>& audit) {
  ordered_json arr = ordered_json::array();
  for (const auto& a : audit) {
    const std::unordered_set<std::uint64_t> fitted(a.fitted_rows.begin(),
                                                   a.fitted_rows.end());
    std::size_t overlap = 0;
    for (auto h : a.tested_rows) overlap += fitted.count(h);
    arr.push_back({{"cell", a.cell},
                   {"fitted_rows", a.fitted_rows.size()},
                   {"tested_rows", a.tested_rows.size()},
                   {"overlap", overlap}});
  }
  return arr;
}

}  // namespace

std::string metrics_json_text(const Evaluation& evaluation) {
  return evaluation_json(evaluation).dump(2) + "\n";
}

void write_report(const AblationReport& r, const fs::path& dir) {
  ordered_json j;
  j["strategy"] = r.strategy;
  ordered_json rows = ordered_json::array();
  std::string csv = std::string("feature,family,") + kMetricsHeader + ",error\n";
  for (const auto& row : r.rows) {
    ordered_json o;
    o["feature"] = std::string(feature_name(row.feature));
    o["family"] = std::string(detect::family_name(row.family));
    o["metrics"] = row.error.empty() ? evaluation_json(row.evaluation)
                                     : ordered_json(nullptr);
    o["error"] = row.error.empty() ? ordered_json(nullptr) : ordered_json(row.error);
    rows.push_back(o);
    csv += std::string(feature_name(row.feature)) + "," +
           std::string(detect::family_name(row.family)) + "," +
           (row.error.empty() ? metrics_csv(row.evaluation.response) : ",,,,,,") +
           "," + csv_text(row.error) + "\n";
  }
  j["rows"] = rows;
  if (!r.audit.empty()) j["audit"] = audit_json(r.audit);
  write_pair(dir, "ablation", j, csv);
}

void write_report(const TokenStudyReport& r, const fs::path& dir) {
  ordered_json j;
  j["family"] = std::string(detect::family_name(r.family));
  ordered_json rows = ordered_json::array();
  std::string csv = std::string("strategy,train_units,") + kMetricsHeader +
                    ",unit_accuracy,error\n";
  for (const auto& row : r.rows) {
    ordered_json o;
    o["strategy"] = row.strategy;
    o["train_units"] = row.train_units;
    o["metrics"] = row.error.empty() ? evaluation_json(row.evaluation)
                                     : ordered_json(nullptr);
    o["error"] = row.error.empty() ? ordered_json(nullptr) : ordered_json(row.error);
    rows.push_back(o);
    const std::string unit_acc =
        row.evaluation.unit ? num(row.evaluation.unit->accuracy()) : "";
    csv += row.strategy + "," + std::to_string(row.train_units) + "," +
           (row.error.empty() ? metrics_csv(row.evaluation.response) : ",,,,,,") +
           "," + (row.error.empty() ? unit_acc : "") + "," +
           csv_text(row.error) + "\n";
  }
  j["rows"] = rows;
  if (!r.audit.empty()) j["audit"] = audit_json(r.audit);
  write_pair(dir, "token_study", j, csv);
}

void write_report(const TransferReport& r, const fs::path& dir) {
  ordered_json j;
  j["family"] = std::string(detect::family_name(r.family));
  j["strategy"] = r.strategy;
  ordered_json cells = ordered_json::array();
  std::string csv = std::string("train,test,diagonal,") + kMetricsHeader + ",error\n";
  for (const auto& c : r.cells) {
    ordered_json o;
    o["train"] = c.train;
    o["test"] = c.test;
    o["diagonal"] = c.diagonal;
    o["metrics"] = c.error.empty() ? metrics_json(c.metrics) : ordered_json(nullptr);
    o["error"] = c.error.empty() ? ordered_json(nullptr) : ordered_json(c.error);
    cells.push_back(o);
    csv += csv_text(c.train) + "," + csv_text(c.test) + "," +
           (c.diagonal ? "1" : "0") + "," +
           (c.error.empty() ? metrics_csv(c.metrics) : ",,,,,,") + "," +
           csv_text(c.error) + "\n";
  }
  j["cells"] = cells;
  if (!r.audit.empty()) j["audit"] = audit_json(r.audit);
  write_pair(dir, "transfer", j, csv);
}

void write_report(const CohortCurve& c, const fs::path& dir) {
  detail::ensure_dir(dir);
  std::string csv = "feature,axis,layer,head,cohort_a,mean_a,se_a,cohort_b,mean_b,se_b\n";
  const std::string feat(feature_name(c.feature));
  const char* axis = c.axis == Axis::kHead ? "head" : "layer";
  for (const auto& p : c.points) {
    csv += feat + "," + axis + "," + std::to_string(p.layer) + "," +
           (p.head >= 0 ? std::to_string(p.head) : "") + "," +
           csv_text(c.cohort_a) + "," + num(p.mean_a) + "," + num(p.se_a) + "," +
           csv_text(c.cohort_b) + "," + num(p.mean_b) + "," + num(p.se_b) + "\n";
  }
  detail::write_text(dir / ("curves_" + feat + ".csv"), csv);
}

void write_report(const std::vector<OverheadRow>& rows, const fs::path& dir) {
  ordered_json arr = ordered_json::array();
  std::string csv =
      "category,feature,name,storage,compute,seconds_per_token,repetitions,tokens,"
      "warning\n";
  for (const auto& r : rows) {
    arr.push_back({{"category", r.category},
                   {"feature", std::string(feature_name(r.feature))},
                   {"name", r.name},
                   {"storage", r.storage},
                   {"compute", r.compute},
                   {"storage_tex", r.storage_tex},
                   {"compute_tex", r.compute_tex},
                   {"seconds_per_token", r.seconds_per_token},
                   {"repetitions", r.repetitions},
                   {"tokens", r.tokens},
                   {"warning", r.warning.empty() ? ordered_json(nullptr)
                                                 : ordered_json(r.warning)}});
    csv += r.category + "," + std::string(feature_name(r.feature)) + "," +
           csv_text(r.name) + "," + csv_text(r.storage) + "," +
           csv_text(r.compute) + "," +
           num(r.seconds_per_token) + "," + std::to_string(r.repetitions) + "," +
           std::to_string(r.tokens) + "," + csv_text(r.warning) + "\n";
  }
  ordered_json j;
  j["strategy"] = "win:8,4";
  j["rows"] = arr;
  write_pair(dir, "overhead", j, csv);
}

}  // namespace haluprobe::eval
