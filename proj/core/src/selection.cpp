#include "haluprobe/selection.h"

#include <charconv>

#include "haluprobe/errors.h"

namespace haluprobe {

namespace {

int parse_positive(std::string_view s, std::string_view whole) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || v < 1) {
    throw ConfigError("bad window parameter in strategy '" + std::string(whole) +
                      "'");
  }
  return v;
}

}  // namespace

SelectionStrategy parse_strategy(std::string_view text, bool strict_windows) {
  if (text == "all") return SelectionStrategy::all_tokens();
  if (text == "per") return SelectionStrategy::per_token();
  if (text == "first") return SelectionStrategy::first_token();
  if (text == "last") return SelectionStrategy::last_token();
  if (text.starts_with("win:")) {
    const auto args = text.substr(4);
    const auto comma = args.find(',');
    if (comma == std::string_view::npos) {
      throw ConfigError("window strategy needs 'win:W,S', got '" +
                        std::string(text) + "'");
    }
    const int w = parse_positive(args.substr(0, comma), text);
    const int s = parse_positive(args.substr(comma + 1), text);
    auto strategy = SelectionStrategy::sliced(w, s, strict_windows);
    validate_strategy(strategy);
    return strategy;
  }
  throw ConfigError("unknown strategy '" + std::string(text) +
                    "' (expected all|per|first|last|win:W,S)");
}

std::string strategy_string(const SelectionStrategy& s) {
  switch (s.kind) {
    case StrategyKind::kAllTokens:
      return "all";
    case StrategyKind::kPerToken:
      return "per";
    case StrategyKind::kFirstToken:
      return "first";
    case StrategyKind::kLastToken:
      return "last";
    case StrategyKind::kSlicedWindow:
      return "win:" + std::to_string(s.window) + "," + std::to_string(s.stride);
  }
  return "";
}

void validate_strategy(const SelectionStrategy& s) {
  if (s.kind != StrategyKind::kSlicedWindow) return;
  if (s.window < 1 || s.stride < 1 || s.stride > s.window) {
    throw ConfigError("sliced window needs 1 <= stride <= window, got " +
                      strategy_string(s));
  }
}

Label unit_label(const InferenceTrace& trace, const Span& unit) {
  switch (trace.label) {
    case Label::kUnlabeled:
      throw ConfigError("trace '" + trace.trace_id +
                        "' is unlabeled; unit labels need a labeled trace");
    case Label::kFactual:
      return Label::kFactual;
    case Label::kHallucinated:
      if (trace.problematic_spans.empty()) return Label::kHallucinated;
      for (const Span& s : trace.problematic_spans) {
        if (s.overlaps(unit)) return Label::kHallucinated;
      }
      return Label::kFactual;
  }
  return Label::kUnlabeled;
}

std::vector<TokenUnit> enumerate_units(const InferenceTrace& trace,
                                       const SelectionStrategy& strategy) {
  validate_strategy(strategy);
  const int n = trace.gen_len;
  if (n < 1) throw ConfigError("trace has no generated tokens");

  std::vector<Span> ranges;
  switch (strategy.kind) {
    case StrategyKind::kAllTokens:
      ranges.push_back({0, n});
      break;
    case StrategyKind::kPerToken:
      for (int t = 0; t < n; ++t) ranges.push_back({t, t + 1});
      break;
    case StrategyKind::kFirstToken:
      ranges.push_back({0, 1});
      break;
    case StrategyKind::kLastToken:
      ranges.push_back({n - 1, n});
      break;
    case StrategyKind::kSlicedWindow: {
      const int w = strategy.window;
      const int s = strategy.stride;
      int start = 0;
      for (; start + w <= n; start += s) ranges.push_back({start, start + w});
      if (ranges.empty()) {
        // Response shorter than one window.
        ranges.push_back({0, n});
      } else if (!strategy.strict_windows && start < n) {
        ranges.push_back({start, n});
      }
      break;
    }
  }

  std::vector<TokenUnit> units;
  units.reserve(ranges.size());
  for (const Span& r : ranges) {
    TokenUnit u{trace.trace_id, r, Label::kUnlabeled};
    if (trace.label != Label::kUnlabeled) u.label = unit_label(trace, r);
    units.push_back(std::move(u));
  }
  return units;
}

ResponseDecision aggregate_decision(
    const std::vector<UnitPrediction>& predictions,
    const SelectionStrategy& strategy, double threshold) {
  if (predictions.empty()) {
    throw ConfigError("aggregate_decision needs at least one unit prediction");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("threshold must be in (0,1)");
  }
  const bool single = strategy.kind == StrategyKind::kAllTokens ||
                      strategy.kind == StrategyKind::kFirstToken ||
                      strategy.kind == StrategyKind::kLastToken;
  if (single && predictions.size() != 1) {
    throw ConfigError("strategy " + strategy_string(strategy) +
                      " yields one unit per response, got " +
                      std::to_string(predictions.size()));
  }
  ResponseDecision d;
  for (const auto& p : predictions) {
    if (p.prob >= threshold) d.trigger_units.push_back(p.unit);
  }
  d.label = d.trigger_units.empty() ? Label::kFactual : Label::kHallucinated;
  return d;
}

}  // namespace haluprobe
