#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "haluprobe/feature_id.h"
#include "haluprobe/trace.h"

namespace haluprobe::synth {

enum class SpanMode { kWholeResponse, kLocalizedSpans };

// Effect sizes planted on hallucinated tokens. Zero means "not planted".
struct Effects {
  // Attention mass moved from earlier positions onto the token itself.
  double lookback_delta = 0.0;
  // Drop in attention-row entropy (nats), applied after the lookback shift.
  double entropy_delta = 0.0;
  // Subtracted from the chosen-token probability.
  double minprob_delta = 0.0;
  // Added to the chosen-token rank.
  int rank_delta = 0;
  // Norm of the class-mean shift of the last-layer hidden state.
  double hidden_shift = 0.0;
  // Dimensions spanned by the shift direction; empty means all dimensions.
  std::vector<int> hidden_shift_dims;

  bool any() const {
    return lookback_delta != 0.0 || entropy_delta != 0.0 ||
           minprob_delta != 0.0 || rank_delta != 0 || hidden_shift != 0.0;
  }
};

struct SynthConfig {
  int n_traces = 100;
  int prompt_len_min = 8;
  int prompt_len_max = 16;
  int gen_len_min = 16;
  int gen_len_max = 24;
  TraceMeta meta = default_meta();
  double halu_fraction = 0.5;
  Effects effects;
  // Scale of every random component; 0 gives fully deterministic tensors.
  double noise_sigma = 1.0;
  SpanMode span_mode = SpanMode::kWholeResponse;
  int span_len = 4;
  // Minimum distance between a localized span and either response endpoint.
  int span_margin = 2;
  // Layers carrying attention and logit effects; empty means all layers.
  std::vector<int> planted_layers;
  std::string dataset_name = "synth";

  static TraceMeta default_meta();
};

// Constants of the base distributions. Exposed for the closed-form oracle.
namespace base {
// Chosen-token probability lives in [kProbLow, kProbHigh].
inline constexpr double kProbLow = 0.04;
inline constexpr double kProbHigh = 0.10;
inline constexpr double kProbFloor = 0.005;
// Base chosen rank is in [1, kMaxBaseRank], truncated geometric: each rank is
// kRankDecay times as likely as the one before it.
inline constexpr int kMaxBaseRank = 4;
inline constexpr double kRankDecay = 0.5;
// Cap on the self-attention weight of an unplanted row.
inline constexpr double kSelfCap = 0.5;
}  // namespace base

// Throws ConfigError when the config is malformed or an effect cannot be
// planted without breaking a trace invariant.
void validate_config(const SynthConfig& config);

bool is_planted_layer(const SynthConfig& config, int layer);

// Deterministic in (config, seed). Trace i draws from its own stream derived
// from (seed, i), so `workers` does not change the output.
TraceSet generate(const SynthConfig& config, std::uint64_t seed,
                  int workers = 1);

// Expected (hallucinated minus factual) cohort gap of `feature` for single-token
// units at a planted layer, averaged over heads, before noise. For
// hidden_state the value is the gap projected on the shift direction.
//
// Throws ConfigError when the configured effects interact with `feature` in a
// way that has no closed form (e.g. attention_entropy with a lookback shift).
double expected_separation(const SynthConfig& config, FeatureId feature);

SynthConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const SynthConfig& config);

}  // namespace haluprobe::synth
