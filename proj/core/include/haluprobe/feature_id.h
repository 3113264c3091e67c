#pragma once

#include <array>
#include <string_view>
#include <vector>

namespace haluprobe {

enum class FeatureId : int {
  kLookbackRatio,
  kAttentionEntropy,
  kKeyTokenRatio,
  kHiddenState,
  kActivationMapDiff,
  kActivationEntropy,
  kMinTokenProb,
  kMaxTokenRank,
  kJointTokenProb,
  kAvgJsd,
};

inline constexpr std::array<FeatureId, 10> kAllFeatures{
    FeatureId::kLookbackRatio,     FeatureId::kAttentionEntropy,
    FeatureId::kKeyTokenRatio,     FeatureId::kHiddenState,
    FeatureId::kActivationMapDiff, FeatureId::kActivationEntropy,
    FeatureId::kMinTokenProb,      FeatureId::kMaxTokenRank,
    FeatureId::kJointTokenProb,    FeatureId::kAvgJsd,
};

// Feature groups by the internal state they read.
enum class FeatureGroup { kAttention, kActivation, kLogit };

std::string_view feature_name(FeatureId id);
// Throws ConfigError for an unknown name.
FeatureId parse_feature(std::string_view name);
// Accepts "all" or a comma-separated list of feature names.
std::vector<FeatureId> parse_feature_list(std::string_view text);

FeatureGroup feature_group(FeatureId id);
std::string_view group_name(FeatureGroup group);
std::vector<FeatureId> features_in_group(FeatureGroup group);

}  // namespace haluprobe
