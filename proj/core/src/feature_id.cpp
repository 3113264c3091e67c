#include "haluprobe/feature_id.h"

#include <string>

#include "haluprobe/errors.h"

namespace haluprobe {

std::string_view feature_name(FeatureId id) {
  switch (id) {
    case FeatureId::kLookbackRatio:
      return "lookback_ratio";
    case FeatureId::kAttentionEntropy:
      return "attention_entropy";
    case FeatureId::kKeyTokenRatio:
      return "key_token_ratio";
    case FeatureId::kHiddenState:
      return "hidden_state";
    case FeatureId::kActivationMapDiff:
      return "activation_map_diff";
    case FeatureId::kActivationEntropy:
      return "activation_entropy";
    case FeatureId::kMinTokenProb:
      return "min_token_prob";
    case FeatureId::kMaxTokenRank:
      return "max_token_rank";
    case FeatureId::kJointTokenProb:
      return "joint_token_prob";
    case FeatureId::kAvgJsd:
      return "avg_jsd";
  }
  return "";
}

FeatureId parse_feature(std::string_view name) {
  for (FeatureId id : kAllFeatures) {
    if (feature_name(id) == name) return id;
  }
  throw ConfigError("unknown feature '" + std::string(name) + "'");
}

std::vector<FeatureId> parse_feature_list(std::string_view text) {
  if (text == "all") return {kAllFeatures.begin(), kAllFeatures.end()};
  std::vector<FeatureId> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const auto item = text.substr(
        pos, comma == std::string_view::npos ? text.size() - pos : comma - pos);
    if (item.empty()) throw ConfigError("empty entry in feature list");
    const FeatureId id = parse_feature(item);
    bool dup = false;
    for (FeatureId seen : out) dup = dup || seen == id;
    if (!dup) out.push_back(id);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

FeatureGroup feature_group(FeatureId id) {
  switch (id) {
    case FeatureId::kLookbackRatio:
    case FeatureId::kAttentionEntropy:
    case FeatureId::kKeyTokenRatio:
      return FeatureGroup::kAttention;
    case FeatureId::kHiddenState:
    case FeatureId::kActivationMapDiff:
    case FeatureId::kActivationEntropy:
      return FeatureGroup::kActivation;
    default:
      return FeatureGroup::kLogit;
  }
}

std::string_view group_name(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::kAttention:
      return "attention";
    case FeatureGroup::kActivation:
      return "activation";
    case FeatureGroup::kLogit:
      return "logit";
  }
  return "";
}

std::vector<FeatureId> features_in_group(FeatureGroup group) {
  std::vector<FeatureId> out;
  for (FeatureId id : kAllFeatures) {
    if (feature_group(id) == group) out.push_back(id);
  }
  return out;
}

}  // namespace haluprobe
