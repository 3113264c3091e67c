#include "haluprobe/trace.h"

#include <cmath>
#include <set>

#include "haluprobe/errors.h"

namespace haluprobe {

std::string_view label_name(Label label) {
  switch (label) {
    case Label::kFactual:
      return "factual";
    case Label::kHallucinated:
      return "hallucinated";
    case Label::kUnlabeled:
      return "unlabeled";
  }
  return "unlabeled";
}

Label parse_label(std::string_view name) {
  if (name == "factual") return Label::kFactual;
  if (name == "hallucinated") return Label::kHallucinated;
  if (name == "unlabeled") return Label::kUnlabeled;
  throw ConfigError("unknown label '" + std::string(name) + "'");
}

std::string_view section_name(Section section) {
  switch (section) {
    case Section::kAttention:
      return "attention";
    case Section::kHidden:
      return "hidden";
    case Section::kActivation:
      return "activation";
    case Section::kLogit:
      return "logit";
  }
  return "";
}

bool SectionSet::has(Section s) const {
  switch (s) {
    case Section::kAttention:
      return attention;
    case Section::kHidden:
      return hidden;
    case Section::kActivation:
      return activation;
    case Section::kLogit:
      return logit;
  }
  return false;
}

void SectionSet::set(Section s, bool present) {
  switch (s) {
    case Section::kAttention:
      attention = present;
      break;
    case Section::kHidden:
      hidden = present;
      break;
    case Section::kActivation:
      activation = present;
      break;
    case Section::kLogit:
      logit = present;
      break;
  }
}

void validate_meta(const TraceMeta& meta) {
  auto positive = [](int v, const char* name) {
    if (v < 1) {
      throw ConfigError(std::string("meta.") + name + " must be >= 1, got " +
                        std::to_string(v));
    }
  };
  positive(meta.num_layers, "num_layers");
  positive(meta.num_heads, "num_heads");
  positive(meta.hidden_dim, "hidden_dim");
  positive(meta.ffn_dim, "ffn_dim");
  positive(meta.vocab_size, "vocab_size");
  positive(meta.topk, "topk");
  if (meta.topk > meta.vocab_size) {
    throw ConfigError("meta.topk exceeds vocab_size");
  }
  if (meta.sections.empty()) {
    throw ConfigError("meta.sections must name at least one section");
  }
}

std::size_t attention_step_offset(const TraceMeta& meta, int prompt_len,
                                  int t) {
  // sum_{u<t} (T_in + u + 1) rows per (l, h)
  const auto tt = static_cast<std::size_t>(t);
  const std::size_t per_head =
      tt * (static_cast<std::size_t>(prompt_len) + 1) + tt * (tt - 1) / 2;
  return per_head * static_cast<std::size_t>(meta.num_layers) *
         static_cast<std::size_t>(meta.num_heads);
}

std::size_t attention_float_count(const TraceMeta& meta, int prompt_len,
                                  int gen_len) {
  return attention_step_offset(meta, prompt_len, gen_len);
}

std::size_t attention_row_offset(const TraceMeta& meta, int prompt_len, int t,
                                 int l, int h) {
  const auto row_len = static_cast<std::size_t>(prompt_len + t + 1);
  return attention_step_offset(meta, prompt_len, t) +
         static_cast<std::size_t>(l * meta.num_heads + h) * row_len;
}

std::size_t hidden_float_count(const TraceMeta& meta, int gen_len) {
  return static_cast<std::size_t>(gen_len) * meta.num_layers * meta.hidden_dim;
}

std::size_t activation_float_count(const TraceMeta& meta, int gen_len) {
  return static_cast<std::size_t>(gen_len) * meta.num_layers * meta.ffn_dim;
}

std::size_t logit_float_count(const TraceMeta& meta, int gen_len) {
  return static_cast<std::size_t>(gen_len) * meta.num_layers *
         meta.logit_record_size();
}

namespace {

void check_token_layer(const TraceMeta& meta, const InferenceTrace& trace,
                       int t, int l) {
  if (t < 0 || t >= trace.gen_len) {
    throw BoundsError("token index " + std::to_string(t) + " outside [0," +
                      std::to_string(trace.gen_len) + ")");
  }
  if (l < 0 || l >= meta.num_layers) {
    throw BoundsError("layer index " + std::to_string(l) + " outside [0," +
                      std::to_string(meta.num_layers) + ")");
  }
}

void require_section(const TraceMeta& meta, Section s) {
  if (!meta.sections.has(s)) {
    throw MissingSectionError("section '" + std::string(section_name(s)) +
                              "' is not present in this trace set");
  }
}

}  // namespace

std::span<const float> InferenceTrace::attention_row(const TraceMeta& meta,
                                                     int t, int l,
                                                     int h) const {
  require_section(meta, Section::kAttention);
  check_token_layer(meta, *this, t, l);
  if (h < 0 || h >= meta.num_heads) {
    throw BoundsError("head index " + std::to_string(h) + " outside [0," +
                      std::to_string(meta.num_heads) + ")");
  }
  const std::size_t off = attention_row_offset(meta, prompt_len, t, l, h);
  const auto len = static_cast<std::size_t>(context_len(t));
  if (off + len > attention.size()) {
    throw BoundsError("attention buffer shorter than declared shape");
  }
  return std::span<const float>(attention).subspan(off, len);
}

std::span<const float> InferenceTrace::hidden_state(const TraceMeta& meta,
                                                    int t, int l) const {
  require_section(meta, Section::kHidden);
  check_token_layer(meta, *this, t, l);
  const auto d = static_cast<std::size_t>(meta.hidden_dim);
  const std::size_t off =
      (static_cast<std::size_t>(t) * meta.num_layers + l) * d;
  if (off + d > hidden.size()) {
    throw BoundsError("hidden buffer shorter than declared shape");
  }
  return std::span<const float>(hidden).subspan(off, d);
}

std::span<const float> InferenceTrace::activation_map(const TraceMeta& meta,
                                                      int t, int l) const {
  require_section(meta, Section::kActivation);
  check_token_layer(meta, *this, t, l);
  const auto m = static_cast<std::size_t>(meta.ffn_dim);
  const std::size_t off =
      (static_cast<std::size_t>(t) * meta.num_layers + l) * m;
  if (off + m > activation.size()) {
    throw BoundsError("activation buffer shorter than declared shape");
  }
  return std::span<const float>(activation).subspan(off, m);
}

LogitView InferenceTrace::logit(const TraceMeta& meta, int t, int l) const {
  require_section(meta, Section::kLogit);
  check_token_layer(meta, *this, t, l);
  const std::size_t rec = meta.logit_record_size();
  const std::size_t off =
      (static_cast<std::size_t>(t) * meta.num_layers + l) * rec;
  if (off + rec > logits.size()) {
    throw BoundsError("logit buffer shorter than declared shape");
  }
  const float* p = logits.data() + off;
  const auto k = static_cast<std::size_t>(meta.topk);
  return LogitView{p[0], p[1], p[2], std::span<const float>(p + 3, k),
                   std::span<const float>(p + 3 + k, k)};
}

namespace {

class ViolationSink {
 public:
  explicit ViolationSink(const std::string& id) : id_(id) {}
  void add(const char* rule, std::string detail) {
    out_.push_back(Violation{id_, rule, std::move(detail)});
  }
  std::vector<Violation> take() { return std::move(out_); }

 private:
  const std::string& id_;
  std::vector<Violation> out_;
};

std::string at(int t, int l) {
  return "t=" + std::to_string(t) + " l=" + std::to_string(l);
}

void check_attention(const TraceMeta& meta, const InferenceTrace& tr,
                     ViolationSink& sink) {
  for (int t = 0; t < tr.gen_len; ++t) {
    for (int l = 0; l < meta.num_layers; ++l) {
      for (int h = 0; h < meta.num_heads; ++h) {
        const auto row = tr.attention_row(meta, t, l, h);
        double sum = 0.0;
        bool bad_entry = false;
        for (float v : row) {
          if (!std::isfinite(v) || v < 0.0f) bad_entry = true;
          sum += v;
        }
        if (bad_entry) {
          sink.add("attention_nonnegative",
                   at(t, l) + " h=" + std::to_string(h) +
                       " has a negative or non-finite weight");
          return;
        }
        if (std::abs(sum - 1.0) > tolerance::kSimplex) {
          sink.add("attention_simplex", at(t, l) + " h=" + std::to_string(h) +
                                            " sums to " + std::to_string(sum));
          return;
        }
      }
    }
  }
}

void check_finite(const std::vector<float>& data, const char* rule,
                  ViolationSink& sink) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      sink.add(rule, "non-finite value at element " + std::to_string(i));
      return;
    }
  }
}

void check_logits(const TraceMeta& meta, const InferenceTrace& tr,
                  ViolationSink& sink) {
  const int k = meta.topk;
  for (int t = 0; t < tr.gen_len; ++t) {
    for (int l = 0; l < meta.num_layers; ++l) {
      const LogitView v = tr.logit(meta, t, l);
      auto in_unit = [](float p) {
        return std::isfinite(p) && p >= 0.0f && p <= 1.0f;
      };
      if (!in_unit(v.chosen_prob) || !in_unit(v.tail_mass)) {
        sink.add("logit_prob_range", at(t, l) + " chosen_prob/tail_mass");
        return;
      }
      if (!std::isfinite(v.chosen_rank) || v.chosen_rank < 1.0f ||
          v.chosen_rank != std::floor(v.chosen_rank)) {
        sink.add("logit_rank",
                 at(t, l) + " rank " + std::to_string(v.chosen_rank));
        return;
      }
      double sum = v.tail_mass;
      for (int i = 0; i < k; ++i) {
        const float p = v.topk_probs[i];
        if (!in_unit(p)) {
          sink.add("logit_prob_range", at(t, l) + " topk entry " +
                                           std::to_string(i));
          return;
        }
        if (i > 0 && p > v.topk_probs[i - 1]) {
          sink.add("topk_order", at(t, l) + " entry " + std::to_string(i) +
                                     " exceeds its predecessor");
          return;
        }
        const float id = v.topk_ids[i];
        if (!std::isfinite(id) || id < 0.0f || id != std::floor(id) ||
            id >= static_cast<float>(meta.vocab_size)) {
          sink.add("logit_ids", at(t, l) + " id " + std::to_string(id));
          return;
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > tolerance::kSimplex) {
        sink.add("logit_simplex",
                 at(t, l) + " topk+tail sums to " + std::to_string(sum));
        return;
      }
      if (v.chosen_rank > 1.0f &&
          v.chosen_prob > v.topk_probs[0] + tolerance::kChosenProb) {
        sink.add("chosen_prob_bound",
                 at(t, l) + " chosen_prob exceeds top-1 at rank > 1");
        return;
      }
    }
  }
}

}  // namespace

std::vector<Violation> find_violations(const TraceMeta& meta,
                                       const InferenceTrace& tr) {
  ViolationSink sink(tr.trace_id);
  if (tr.trace_id.empty()) sink.add("trace_id_empty", "trace_id is empty");
  if (tr.gen_len < 1) {
    sink.add("gen_len_positive", "gen_len=" + std::to_string(tr.gen_len));
    return sink.take();
  }
  if (tr.prompt_len < 0) {
    sink.add("prompt_len_nonnegative",
             "prompt_len=" + std::to_string(tr.prompt_len));
    return sink.take();
  }

  struct Shape {
    Section section;
    const std::vector<float>* data;
    std::size_t expected;
    const char* shape_rule;
  };
  const Shape shapes[] = {
      {Section::kAttention, &tr.attention,
       attention_float_count(meta, tr.prompt_len, tr.gen_len),
       "attention_shape"},
      {Section::kHidden, &tr.hidden, hidden_float_count(meta, tr.gen_len),
       "hidden_shape"},
      {Section::kActivation, &tr.activation,
       activation_float_count(meta, tr.gen_len), "activation_shape"},
      {Section::kLogit, &tr.logits, logit_float_count(meta, tr.gen_len),
       "logit_shape"},
  };
  bool shapes_ok = true;
  for (const auto& s : shapes) {
    const std::size_t want = meta.sections.has(s.section) ? s.expected : 0;
    if (s.data->size() != want) {
      sink.add(s.shape_rule, "expected " + std::to_string(want) +
                                 " floats, found " +
                                 std::to_string(s.data->size()));
      shapes_ok = false;
    }
  }
  if (shapes_ok) {
    if (meta.sections.attention) check_attention(meta, tr, sink);
    if (meta.sections.hidden) check_finite(tr.hidden, "hidden_finite", sink);
    if (meta.sections.activation) {
      check_finite(tr.activation, "activation_finite", sink);
    }
    if (meta.sections.logit) check_logits(meta, tr, sink);
  }

  for (const Span& s : tr.problematic_spans) {
    if (s.start < 0 || s.end > tr.gen_len || s.start >= s.end) {
      sink.add("span_range", "span [" + std::to_string(s.start) + "," +
                                 std::to_string(s.end) + ") outside [0," +
                                 std::to_string(tr.gen_len) + ")");
    }
  }
  if (!tr.problematic_spans.empty() && tr.label != Label::kHallucinated) {
    sink.add("span_label", "problematic spans on a trace labeled " +
                               std::string(label_name(tr.label)));
  }
  return sink.take();
}

std::vector<Violation> find_violations(const TraceSet& set) {
  std::vector<Violation> out;
  std::set<std::string> seen;
  for (const auto& tr : set.traces) {
    if (!seen.insert(tr.trace_id).second) {
      out.push_back({tr.trace_id, "trace_id_unique", "duplicate trace_id"});
    }
    auto v = find_violations(set.meta, tr);
    out.insert(out.end(), std::make_move_iterator(v.begin()),
               std::make_move_iterator(v.end()));
  }
  return out;
}

void validate_trace(const TraceMeta& meta, const InferenceTrace& trace) {
  auto v = find_violations(meta, trace);
  if (!v.empty()) {
    throw ValidationError(v.front().trace_id, v.front().rule,
                          v.front().detail);
  }
}

void validate_set(const TraceSet& set) {
  validate_meta(set.meta);
  auto v = find_violations(set);
  if (!v.empty()) {
    throw ValidationError(v.front().trace_id, v.front().rule,
                          v.front().detail);
  }
}

}  // namespace haluprobe
