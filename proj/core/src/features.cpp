#include "haluprobe/features.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "haluprobe/errors.h"
#include "parallel.h"

namespace haluprobe::features {

namespace {

bool enabled(const FeatureConfig& c, FeatureId id) {
  return std::find(c.enabled.begin(), c.enabled.end(), id) != c.enabled.end();
}

Section required_section(FeatureId id) {
  switch (feature_group(id)) {
    case FeatureGroup::kAttention:
      return Section::kAttention;
    case FeatureGroup::kActivation:
      return id == FeatureId::kHiddenState ? Section::kHidden
                                           : Section::kActivation;
    case FeatureGroup::kLogit:
      return Section::kLogit;
  }
  return Section::kLogit;
}

void require_unit(const InferenceTrace& trace, const Span& unit) {
  if (unit.start >= unit.end) {
    throw ConfigError("empty token unit");
  }
  if (unit.start < 0 || unit.end > trace.gen_len) {
    throw BoundsError("unit [" + std::to_string(unit.start) + "," +
                      std::to_string(unit.end) + ") outside response");
  }
}

double row_sum(std::span<const float> row) {
  double s = 0.0;
  for (float v : row) s += v;
  if (!(s > 0.0)) {
    throw Error("attention row has no mass");
  }
  return s;
}

}  // namespace

void validate_config(const FeatureConfig& c) {
  if (c.enabled.empty()) throw ConfigError("no features enabled");
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

double lookback_ratio(const TraceMeta& meta, const InferenceTrace& trace,
                      int t, int l, int h) {
  const auto row = trace.attention_row(meta, t, l, h);
  const double total = row_sum(row);
  double prev = 0.0;
  for (std::size_t i = 0; i + 1 < row.size(); ++i) prev += row[i];
  return prev / total;
}

double attention_entropy(const TraceMeta& meta, const InferenceTrace& trace,
                         int t, int l, int h, double epsilon) {
  const auto row = trace.attention_row(meta, t, l, h);
  const double total = row_sum(row);
  double entropy = 0.0;
  for (float v : row) {
    const double p = v / total;
    if (p > epsilon) entropy -= p * std::log(p);
  }
  return entropy;
}

double key_token_ratio(const TraceMeta& meta, const InferenceTrace& trace,
                       int t, int l, int h, std::span<const int> mask) {
  const auto row = trace.attention_row(meta, t, l, h);
  if (mask.empty()) return 0.0;
  const double total = row_sum(row);
  double key = 0.0;
  for (int pos : mask) {
    if (pos < 0 || static_cast<std::size_t>(pos) >= row.size()) {
      throw BoundsError("key mask position " + std::to_string(pos) +
                        " is not attended at step " + std::to_string(t));
    }
    key += row[pos];
  }
  return key / total;
}

std::vector<double> hidden_state_feature(const TraceMeta& meta,
                                         const InferenceTrace& trace, int t) {
  const auto v = trace.hidden_state(meta, t, meta.num_layers - 1);
  return {v.begin(), v.end()};
}

double activation_entropy(const TraceMeta& meta, const InferenceTrace& trace,
                          int t, int l) {
  const auto a = trace.activation_map(meta, t, l);
  double total = 0.0;
  for (float v : a) total += std::max(0.0, static_cast<double>(v));
  if (total <= 0.0) return std::log(static_cast<double>(a.size()));
  double entropy = 0.0;
  for (float v : a) {
    const double p = std::max(0.0, static_cast<double>(v)) / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return entropy;
}

double activation_map_diff(const TraceMeta& meta, const InferenceTrace& trace,
                           int t, int l) {
  if (t == 0) {
    throw ConfigError("activation_map_diff is undefined for the first token");
  }
  const auto cur = trace.activation_map(meta, t, l);
  const auto prev = trace.activation_map(meta, t - 1, l);
  double sq = 0.0;
  for (std::size_t j = 0; j < cur.size(); ++j) {
    const double d = static_cast<double>(cur[j]) - prev[j];
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(cur.size()));
}

double min_token_prob(const TraceMeta& meta, const InferenceTrace& trace,
                      const Span& unit, int l) {
  require_unit(trace, unit);
  double best = std::numeric_limits<double>::infinity();
  for (int t = unit.start; t < unit.end; ++t) {
    best = std::min(best, static_cast<double>(trace.logit(meta, t, l).chosen_prob));
  }
  return best;
}

int max_token_rank(const TraceMeta& meta, const InferenceTrace& trace,
                   const Span& unit, int l) {
  require_unit(trace, unit);
  int best = 1;
  for (int t = unit.start; t < unit.end; ++t) {
    best = std::max(best, static_cast<int>(trace.logit(meta, t, l).chosen_rank));
  }
  return best;
}

double joint_token_prob(const TraceMeta& meta, const InferenceTrace& trace,
                        const Span& unit, int l, double epsilon) {
  require_unit(trace, unit);
  double log_p = 0.0;
  for (int t = unit.start; t < unit.end; ++t) {
    log_p += std::log(
        std::max(static_cast<double>(trace.logit(meta, t, l).chosen_prob),
                 epsilon));
  }
  return log_p;
}

double jensen_shannon(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw LayoutError("JSD support mismatch");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

namespace {

// Truncated distributions of two logit records on their joint support.
void truncated_pair(const LogitView& a, const LogitView& b,
                    std::vector<double>& p, std::vector<double>& q) {
  std::map<float, std::pair<double, double>> support;
  for (std::size_t i = 0; i < a.topk_ids.size(); ++i) {
    support[a.topk_ids[i]].first += a.topk_probs[i];
  }
  for (std::size_t i = 0; i < b.topk_ids.size(); ++i) {
    support[b.topk_ids[i]].second += b.topk_probs[i];
  }
  p.clear();
  q.clear();
  for (const auto& [id, pq] : support) {
    p.push_back(pq.first);
    q.push_back(pq.second);
  }
  p.push_back(a.tail_mass);
  q.push_back(b.tail_mass);
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    if (s > 0.0) {
      for (double& x : v) x /= s;
    }
  };
  normalize(p);
  normalize(q);
}

}  // namespace

double avg_jsd(const TraceMeta& meta, const InferenceTrace& trace,
               const Span& unit, int l) {
  require_unit(trace, unit);
  const int last = meta.num_layers - 1;
  if (l < 0 || l > last) throw BoundsError("layer index out of range");
  double sum = 0.0;
  std::vector<double> p, q;
  for (int t = unit.start; t < unit.end; ++t) {
    const LogitView a = trace.logit(meta, t, l);
    if (l == last) continue;
    truncated_pair(a, trace.logit(meta, t, last), p, q);
    sum += jensen_shannon(p, q);
  }
  return sum / unit.length();
}

FeatureLayout make_layout(const TraceMeta& meta, const FeatureConfig& config) {
  validate_config(config);
  FeatureLayout layout;
  const bool per_head = config.head_granularity == HeadGranularity::kPerHead;
  for (FeatureId id : kAllFeatures) {
    if (!enabled(config, id)) continue;
    if (id == FeatureId::kHiddenState) {
      for (int j = 0; j < meta.hidden_dim; ++j) {
        layout.push_back({id, meta.num_layers - 1, -1, j});
      }
      continue;
    }
    for (int l = 0; l < meta.num_layers; ++l) {
      if (feature_group(id) == FeatureGroup::kAttention && per_head) {
        for (int h = 0; h < meta.num_heads; ++h) layout.push_back({id, l, h, -1});
      } else {
        layout.push_back({id, l, -1, -1});
      }
    }
  }
  return layout;
}

namespace {

// Per-token values of the token-level features of one trace, computed once
// and shared by overlapping units.
struct TokenCache {
  int T = 0;
  int L = 0;
  int H = 0;
  int d = 0;
  // [feature slot][t][l][h]
  std::vector<std::vector<double>> attention;
  std::vector<double> hidden;          // [t][d]
  std::vector<double> act_entropy;     // [t][l]
  std::vector<double> act_diff;        // [t][l], t = 0 unused

  double att(int slot, int t, int l, int h) const {
    return attention[slot][(static_cast<std::size_t>(t) * L + l) * H + h];
  }
};

int attention_slot(FeatureId id) {
  switch (id) {
    case FeatureId::kLookbackRatio:
      return 0;
    case FeatureId::kAttentionEntropy:
      return 1;
    case FeatureId::kKeyTokenRatio:
      return 2;
    default:
      return -1;
  }
}

TokenCache build_cache(const TraceMeta& meta, const InferenceTrace& tr,
                       const FeatureConfig& config) {
  TokenCache c;
  c.T = tr.gen_len;
  c.L = meta.num_layers;
  c.H = meta.num_heads;
  c.d = meta.hidden_dim;
  c.attention.resize(3);
  const std::size_t n_att = static_cast<std::size_t>(c.T) * c.L * c.H;

  const bool want_lb = enabled(config, FeatureId::kLookbackRatio);
  const bool want_ent = enabled(config, FeatureId::kAttentionEntropy);
  const bool want_key = enabled(config, FeatureId::kKeyTokenRatio);
  if (want_lb) c.attention[0].resize(n_att);
  if (want_ent) c.attention[1].resize(n_att);
  if (want_key) c.attention[2].resize(n_att);

  if (want_lb || want_ent || want_key) {
    std::vector<int> mask;
    for (int t = 0; t < c.T; ++t) {
      const int n = tr.context_len(t);
      mask.clear();
      if (config.key_mask_source == KeyMaskSource::kPromptTokens) {
        for (int i = 0; i < tr.prompt_len; ++i) mask.push_back(i);
      } else {
        for (int pos : config.explicit_mask) {
          if (pos >= 0 && pos < n) mask.push_back(pos);
        }
      }
      for (int l = 0; l < c.L; ++l) {
        for (int h = 0; h < c.H; ++h) {
          const std::size_t k = (static_cast<std::size_t>(t) * c.L + l) * c.H + h;
          if (want_lb) c.attention[0][k] = lookback_ratio(meta, tr, t, l, h);
          if (want_ent) {
            c.attention[1][k] = attention_entropy(meta, tr, t, l, h, config.epsilon);
          }
          if (want_key) c.attention[2][k] = key_token_ratio(meta, tr, t, l, h, mask);
        }
      }
    }
  }
  if (enabled(config, FeatureId::kHiddenState)) {
    c.hidden.resize(static_cast<std::size_t>(c.T) * c.d);
    for (int t = 0; t < c.T; ++t) {
      const auto v = tr.hidden_state(meta, t, c.L - 1);
      std::copy(v.begin(), v.end(), c.hidden.begin() + static_cast<std::size_t>(t) * c.d);
    }
  }
  if (enabled(config, FeatureId::kActivationEntropy)) {
    c.act_entropy.resize(static_cast<std::size_t>(c.T) * c.L);
    for (int t = 0; t < c.T; ++t) {
      for (int l = 0; l < c.L; ++l) {
        c.act_entropy[static_cast<std::size_t>(t) * c.L + l] =
            activation_entropy(meta, tr, t, l);
      }
    }
  }
  if (enabled(config, FeatureId::kActivationMapDiff)) {
    c.act_diff.assign(static_cast<std::size_t>(c.T) * c.L, 0.0);
    for (int t = 1; t < c.T; ++t) {
      for (int l = 0; l < c.L; ++l) {
        c.act_diff[static_cast<std::size_t>(t) * c.L + l] =
            activation_map_diff(meta, tr, t, l);
      }
    }
  }
  return c;
}

// Reduces g(t) over t in [begin, end) by mean or max. Empty ranges give 0.
template <typename G>
double reduce(int begin, int end, Aggregation agg, G&& g) {
  if (begin >= end) return 0.0;
  if (agg == Aggregation::kMax) {
    double best = -std::numeric_limits<double>::infinity();
    for (int t = begin; t < end; ++t) best = std::max(best, g(t));
    return best;
  }
  double sum = 0.0;
  for (int t = begin; t < end; ++t) sum += g(t);
  return sum / (end - begin);
}

void fill_row(const TraceMeta& meta, const InferenceTrace& tr,
              const FeatureConfig& config, const TokenCache& c,
              const FeatureLayout& layout, const Span& u,
              std::vector<double>& row) {
  row.resize(layout.size());
  const Aggregation agg = config.aggregation;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const LayoutEntry& e = layout[k];
    const int slot = attention_slot(e.feature);
    double v = 0.0;
    if (slot >= 0) {
      if (e.head >= 0) {
        v = reduce(u.start, u.end, agg,
                   [&](int t) { return c.att(slot, t, e.layer, e.head); });
      } else {
        v = reduce(u.start, u.end, agg, [&](int t) {
          double s = 0.0;
          for (int h = 0; h < c.H; ++h) s += c.att(slot, t, e.layer, h);
          return s / c.H;
        });
      }
    } else {
      switch (e.feature) {
        case FeatureId::kHiddenState:
          v = reduce(u.start, u.end, agg, [&](int t) {
            return c.hidden[static_cast<std::size_t>(t) * c.d + e.dim];
          });
          break;
        case FeatureId::kActivationEntropy:
          v = reduce(u.start, u.end, agg, [&](int t) {
            return c.act_entropy[static_cast<std::size_t>(t) * c.L + e.layer];
          });
          break;
        case FeatureId::kActivationMapDiff:
          // The first response token has no predecessor and is skipped.
          v = reduce(std::max(u.start, 1), u.end, agg, [&](int t) {
            return c.act_diff[static_cast<std::size_t>(t) * c.L + e.layer];
          });
          break;
        case FeatureId::kMinTokenProb:
          v = min_token_prob(meta, tr, u, e.layer);
          break;
        case FeatureId::kMaxTokenRank:
          v = max_token_rank(meta, tr, u, e.layer);
          break;
        case FeatureId::kJointTokenProb:
          v = joint_token_prob(meta, tr, u, e.layer, config.epsilon);
          break;
        case FeatureId::kAvgJsd:
          v = avg_jsd(meta, tr, u, e.layer);
          break;
        default:
          break;
      }
    }
    if (!std::isfinite(v)) {
      throw ValidationError(tr.trace_id, "feature_finite",
                            e.name() + " is not finite");
    }
    row[k] = v;
  }
}

void check_sections(const TraceMeta& meta, const FeatureConfig& config,
                    const SelectionStrategy& strategy) {
  validate_config(config);
  validate_strategy(strategy);
  if (config.aggregation == Aggregation::kMax &&
      strategy.kind != StrategyKind::kAllTokens) {
    throw ConfigError("max aggregation is only available with the all-tokens "
                      "strategy");
  }
  std::string missing;
  for (FeatureId id : config.enabled) {
    if (!meta.sections.has(required_section(id))) {
      if (!missing.empty()) missing += ", ";
      missing += std::string(feature_name(id)) + " (needs " +
                 std::string(section_name(required_section(id))) + ")";
    }
  }
  if (!missing.empty()) {
    throw ConfigError("enabled features need absent sections: " + missing);
  }
}

}  // namespace

FeatureTable extract_trace_features(const TraceMeta& meta,
                                    const InferenceTrace& trace,
                                    const FeatureConfig& config,
                                    const SelectionStrategy& strategy) {
  check_sections(meta, config, strategy);
  FeatureTable table(make_layout(meta, config), strategy_string(strategy));
  const TokenCache cache = build_cache(meta, trace, config);
  std::vector<double> row;
  for (auto& unit : enumerate_units(trace, strategy)) {
    fill_row(meta, trace, config, cache, table.layout(), unit.range, row);
    table.add_row(std::move(unit), row);
  }
  return table;
}

FeatureTable extract_feature_table(const TraceSet& set,
                                   const FeatureConfig& config,
                                   const SelectionStrategy& strategy,
                                   int workers) {
  check_sections(set.meta, config, strategy);
  std::vector<FeatureTable> parts(set.traces.size());
  detail::parallel_for(static_cast<int>(set.traces.size()), workers, [&](int i) {
    parts[i] = extract_trace_features(set.meta, set.traces[i], config, strategy);
  });
  FeatureTable table(make_layout(set.meta, config), strategy_string(strategy));
  for (const auto& p : parts) table.append(p);
  return table;
}

}  // namespace haluprobe::features
