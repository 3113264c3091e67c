#pragma once

#include <span>
#include <vector>

#include "haluprobe/feature_id.h"
#include "haluprobe/feature_table.h"
#include "haluprobe/selection.h"
#include "haluprobe/trace.h"

namespace haluprobe::features {

enum class HeadGranularity { kPerHead, kLayerMean };
enum class KeyMaskSource { kPromptTokens, kExplicitMask };
// Within-unit reduction of per-token features. kMax is only accepted with the
// all-tokens strategy.
enum class Aggregation { kMean, kMax };

inline constexpr double kDefaultEpsilon = 1e-12;

struct FeatureConfig {
  std::vector<FeatureId> enabled{kAllFeatures.begin(), kAllFeatures.end()};
  HeadGranularity head_granularity = HeadGranularity::kLayerMean;
  KeyMaskSource key_mask_source = KeyMaskSource::kPromptTokens;
  // Context positions used when key_mask_source is kExplicitMask. Positions
  // beyond a step's attended range are ignored.
  std::vector<int> explicit_mask;
  double epsilon = kDefaultEpsilon;
  Aggregation aggregation = Aggregation::kMean;
};

void validate_config(const FeatureConfig& config);

// --- per-token attention features -----------------------------------------

// Attention mass on positions before the token's own position.
double lookback_ratio(const TraceMeta& meta, const InferenceTrace& trace,
                      int t, int l, int h);

// Shannon entropy (nats) of the renormalized attention row; entries with
// p <= epsilon contribute nothing.
double attention_entropy(const TraceMeta& meta, const InferenceTrace& trace,
                         int t, int l, int h,
                         double epsilon = kDefaultEpsilon);

// Mass on `mask` positions over total row mass. An empty mask gives 0.
// Throws BoundsError if a mask position is not attended at step t.
double key_token_ratio(const TraceMeta& meta, const InferenceTrace& trace,
                       int t, int l, int h, std::span<const int> mask);

// --- activation features ---------------------------------------------------

// Copy of the last-layer hidden state of token t.
std::vector<double> hidden_state_feature(const TraceMeta& meta,
                                         const InferenceTrace& trace, int t);

// Entropy of the clipped, normalized activation map: p_j = r_j / sum r with
// r = max(a, 0). An all-nonpositive map returns ln m.
double activation_entropy(const TraceMeta& meta, const InferenceTrace& trace,
                          int t, int l);

// ||a_t - a_{t-1}||_2 / sqrt(m). Throws ConfigError for t == 0.
double activation_map_diff(const TraceMeta& meta, const InferenceTrace& trace,
                           int t, int l);

// --- per-unit logit features -----------------------------------------------

double min_token_prob(const TraceMeta& meta, const InferenceTrace& trace,
                      const Span& unit, int l);
int max_token_rank(const TraceMeta& meta, const InferenceTrace& trace,
                   const Span& unit, int l);
// Sum of ln(max(chosen_prob, epsilon)) over the unit.
double joint_token_prob(const TraceMeta& meta, const InferenceTrace& trace,
                        const Span& unit, int l,
                        double epsilon = kDefaultEpsilon);
// Mean over the unit of JSD(P_l || P_{L-1}) on truncated distributions: each
// top-K list over the union of both id sets plus one bucket for tail mass.
double avg_jsd(const TraceMeta& meta, const InferenceTrace& trace,
               const Span& unit, int l);

// Jensen-Shannon divergence (nats) of two distributions on the same support.
double jensen_shannon(std::span<const double> p, std::span<const double> q);

// --- tables ----------------------------------------------------------------

FeatureLayout make_layout(const TraceMeta& meta, const FeatureConfig& config);

// One row per unit per trace, in trace order then unit order. Output does not
// depend on `workers`.
//
// Throws ConfigError if an enabled feature needs a section the set lacks.
FeatureTable extract_feature_table(const TraceSet& set,
                                   const FeatureConfig& config,
                                   const SelectionStrategy& strategy,
                                   int workers = 1);

// Feature rows of a single trace.
FeatureTable extract_trace_features(const TraceMeta& meta,
                                    const InferenceTrace& trace,
                                    const FeatureConfig& config,
                                    const SelectionStrategy& strategy);

}  // namespace haluprobe::features
