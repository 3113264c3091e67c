#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace haluprobe {

enum class Label : std::uint8_t { kFactual, kHallucinated, kUnlabeled };

std::string_view label_name(Label label);
Label parse_label(std::string_view name);

enum class Section : std::uint8_t { kAttention, kHidden, kActivation, kLogit };

std::string_view section_name(Section section);

struct SectionSet {
  bool attention = false;
  bool hidden = false;
  bool activation = false;
  bool logit = false;

  static SectionSet all() { return {true, true, true, true}; }
  bool has(Section s) const;
  void set(Section s, bool present);
  bool empty() const { return !(attention || hidden || activation || logit); }
  bool operator==(const SectionSet&) const = default;
};

// Shape description shared by every trace of a set.
struct TraceMeta {
  std::string model_name;
  int num_layers = 1;
  int num_heads = 1;
  int hidden_dim = 1;
  int ffn_dim = 1;
  int vocab_size = 1;
  int topk = 1;
  SectionSet sections;

  // Floats per (token, layer) logit record: chosen_prob, chosen_rank,
  // tail_mass, then topk probabilities and topk vocab ids.
  std::size_t logit_record_size() const {
    return 3 + 2 * static_cast<std::size_t>(topk);
  }

  bool operator==(const TraceMeta&) const = default;
};

// Throws ConfigError when a meta field is out of range.
void validate_meta(const TraceMeta& meta);

// Half-open generated-token range [start, end).
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool overlaps(const Span& other) const {
    return start < other.end && other.start < end;
  }
  bool operator==(const Span&) const = default;
};

struct LogitView {
  float chosen_prob;
  float chosen_rank;
  float tail_mass;
  std::span<const float> topk_probs;
  std::span<const float> topk_ids;
};

// One prompt/response pair with its captured internal states. All tensors
// are binary32 and laid out exactly as on disk:
//   attention   ragged, for t in [0,T_out), l, h: a row of T_in+t+1 weights
//   hidden      [T_out x L x d]   post-block hidden states
//   activation  [T_out x L x m]   FFN activation maps
//   logits      [T_out x L x (3 + 2K)]
struct InferenceTrace {
  std::string trace_id;
  int prompt_len = 0;
  int gen_len = 1;
  std::vector<float> attention;
  std::vector<float> hidden;
  std::vector<float> activation;
  std::vector<float> logits;
  Label label = Label::kUnlabeled;
  std::vector<Span> problematic_spans;

  int context_len(int t) const { return prompt_len + t + 1; }

  // Accessors check indices against `meta` and the section flags.
  std::span<const float> attention_row(const TraceMeta& meta, int t, int l,
                                       int h) const;
  std::span<const float> hidden_state(const TraceMeta& meta, int t,
                                      int l) const;
  std::span<const float> activation_map(const TraceMeta& meta, int t,
                                        int l) const;
  LogitView logit(const TraceMeta& meta, int t, int l) const;

  bool operator==(const InferenceTrace&) const = default;
};

// Number of attention floats before generated step t for one trace.
std::size_t attention_step_offset(const TraceMeta& meta, int prompt_len,
                                  int t);
std::size_t attention_float_count(const TraceMeta& meta, int prompt_len,
                                  int gen_len);
std::size_t attention_row_offset(const TraceMeta& meta, int prompt_len,
                                 int t, int l, int h);

std::size_t hidden_float_count(const TraceMeta& meta, int gen_len);
std::size_t activation_float_count(const TraceMeta& meta, int gen_len);
std::size_t logit_float_count(const TraceMeta& meta, int gen_len);

struct TraceSet {
  TraceMeta meta;
  std::string dataset_name;
  std::vector<InferenceTrace> traces;

  bool operator==(const TraceSet&) const = default;
};

struct Violation {
  std::string trace_id;
  std::string rule;
  std::string detail;
};

namespace tolerance {
inline constexpr double kSimplex = 1e-4;
inline constexpr double kChosenProb = 1e-6;
}  // namespace tolerance

// Every invariant violated by `trace`, in a fixed order. Empty when valid.
std::vector<Violation> find_violations(const TraceMeta& meta,
                                       const InferenceTrace& trace);
std::vector<Violation> find_violations(const TraceSet& set);

// Throws ValidationError for the first violation found.
void validate_trace(const TraceMeta& meta, const InferenceTrace& trace);
void validate_set(const TraceSet& set);

}  // namespace haluprobe
