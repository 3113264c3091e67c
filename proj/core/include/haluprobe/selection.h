#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "haluprobe/trace.h"

namespace haluprobe {

enum class StrategyKind {
  kAllTokens,
  kPerToken,
  kFirstToken,
  kLastToken,
  kSlicedWindow,
};

struct SelectionStrategy {
  StrategyKind kind = StrategyKind::kAllTokens;
  int window = 0;  // sliced only
  int stride = 0;  // sliced only
  // Sliced only: emit exactly the N-w+1 full-window starts and drop the
  // trailing partial window.
  bool strict_windows = false;

  static SelectionStrategy all_tokens() { return {}; }
  static SelectionStrategy per_token() { return {StrategyKind::kPerToken}; }
  static SelectionStrategy first_token() { return {StrategyKind::kFirstToken}; }
  static SelectionStrategy last_token() { return {StrategyKind::kLastToken}; }
  static SelectionStrategy sliced(int w, int s, bool strict = false) {
    return {StrategyKind::kSlicedWindow, w, s, strict};
  }

  bool operator==(const SelectionStrategy&) const = default;
};

// Parses `all | per | first | last | win:W,S`.
SelectionStrategy parse_strategy(std::string_view text,
                                 bool strict_windows = false);
std::string strategy_string(const SelectionStrategy& strategy);
// Throws ConfigError unless 1 <= stride <= window for sliced strategies.
void validate_strategy(const SelectionStrategy& strategy);

struct TokenUnit {
  std::string trace_id;
  Span range;
  Label label = Label::kUnlabeled;

  bool operator==(const TokenUnit&) const = default;
};

// Units sorted by start. Labels are filled in when the trace is labeled and
// left as kUnlabeled otherwise.
std::vector<TokenUnit> enumerate_units(const InferenceTrace& trace,
                                       const SelectionStrategy& strategy);

// Factual trace: factual. Hallucinated trace with spans: hallucinated iff the
// unit overlaps a span. Hallucinated trace without spans: hallucinated.
// Throws ConfigError for an unlabeled trace.
Label unit_label(const InferenceTrace& trace, const Span& unit);

struct UnitPrediction {
  double prob = 0.0;
  Span unit;
};

struct ResponseDecision {
  Label label = Label::kFactual;
  std::vector<Span> trigger_units;
};

inline constexpr double kDefaultThreshold = 0.5;

// Logical OR over units: the response is hallucinated iff some unit has
// prob >= threshold.
ResponseDecision aggregate_decision(
    const std::vector<UnitPrediction>& predictions,
    const SelectionStrategy& strategy, double threshold = kDefaultThreshold);

}  // namespace haluprobe
