#include "haluprobe/synth.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "haluprobe/errors.h"
#include "parallel.h"

namespace haluprobe::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse CDF of the truncated geometric base rank at u in [0, 1].
int base_rank(double u) {
  double norm = 0.0;
  for (int r = 0; r < base::kMaxBaseRank; ++r) norm += std::pow(base::kRankDecay, r);
  double cdf = 0.0;
  for (int r = 1; r < base::kMaxBaseRank; ++r) {
    cdf += std::pow(base::kRankDecay, r - 1) / norm;
    if (u < cdf) return r;
  }
  return base::kMaxBaseRank;
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

// Per-trace sampling context.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double normal() { return normal_(rng_); }
  double uniform() { return uniform_(rng_); }
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct Block {
  std::size_t begin;
  std::size_t end;
  double mass;
};

// Attention row for one (t, l, h). Previous positions are split into a
// prompt block and a generated block; tempering within blocks keeps each
// block's mass (and hence key-token ratio) fixed while moving entropy.
class AttentionRow {
 public:
  AttentionRow(int prompt_len, int t, double sigma, Sampler& rng)
      : n_(prompt_len + t + 1), log_w_(n_ - 1) {
    std::vector<double> w(n_ - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      log_w_[i] = sigma * rng.normal();
      w[i] = std::exp(log_w_[i]);
      total += w[i];
    }
    const double logit_self = std::log(1.0 / (n_ - 1.0));  // logit(1/n)
    self_ = std::min(sigmoid(logit_self + sigma * rng.normal()),
                     base::kSelfCap);
    const auto p_end = static_cast<std::size_t>(prompt_len);
    double prompt_mass = 0.0;
    for (std::size_t i = 0; i < p_end; ++i) prompt_mass += w[i];
    blocks_[0] = {0, p_end, prompt_mass / total};
    blocks_[1] = {p_end, w.size(), 1.0 - prompt_mass / total};
  }

  void shift_to_self(double delta) { self_ += delta; }

  double entropy(double tau) const {
    double h = self_ > 0.0 ? -self_ * std::log(self_) : 0.0;
    fill(tau, [&](std::size_t, double r) {
      if (r > 0.0) h -= r * std::log(r);
    });
    return h;
  }

  // Sharpens previous-position weights until the row entropy equals target.
  void temper_to_entropy(double target) {
    if (entropy(1.0) <= target) {
      throw ConfigError("entropy_delta must lower entropy");
    }
    double hi = 2.0;
    while (entropy(hi) > target) {
      hi *= 2.0;
      if (hi > 1e5) {
        throw ConfigError(
            "entropy_delta infeasible: row cannot be concentrated enough");
      }
    }
    double lo = std::max(1.0, hi / 2.0);
    for (int it = 0; it < 80 && hi - lo > 1e-12 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (entropy(mid) > target ? lo : hi) = mid;
    }
    tau_ = 0.5 * (lo + hi);
  }

  void write(float* out) const {
    fill(tau_, [&](std::size_t i, double r) { out[i] = static_cast<float>(r); });
    out[n_ - 1] = static_cast<float>(self_);
  }

 private:
  template <typename F>
  void fill(double tau, F&& emit) const {
    for (const Block& b : blocks_) {
      if (b.begin == b.end) continue;
      double mx = -1e300;
      for (std::size_t i = b.begin; i < b.end; ++i) {
        mx = std::max(mx, log_w_[i]);
      }
      double z = 0.0;
      for (std::size_t i = b.begin; i < b.end; ++i) {
        z += std::exp(tau * (log_w_[i] - mx));
      }
      const double scale = (1.0 - self_) * b.mass / z;
      for (std::size_t i = b.begin; i < b.end; ++i) {
        emit(i, scale * std::exp(tau * (log_w_[i] - mx)));
      }
    }
  }

  int n_;
  std::vector<double> log_w_;
  double self_ = 0.0;
  double tau_ = 1.0;
  Block blocks_[2];
};

// Top-K candidate vocabulary ids for one generated token; index 0 is the
// chosen token.
std::vector<float> sample_pool(int vocab, int k, Sampler& rng) {
  std::vector<float> pool;
  std::unordered_set<int> seen;
  while (static_cast<int>(pool.size()) < k + 1) {
    const int id = rng.uniform_int(0, vocab - 1);
    if (seen.insert(id).second) pool.push_back(static_cast<float>(id));
  }
  return pool;
}

void write_logit_record(const TraceMeta& meta, double p, int rank,
                        double top_share, const std::vector<float>& pool,
                        float* out) {
  const int k = meta.topk;
  const int above = rank - 1;
  const int below = std::max(0, k - rank);
  std::vector<double> below_probs(below);
  double below_sum = 0.0;
  for (int j = 0; j < below; ++j) {
    below_probs[j] = p * std::pow(0.5, j + 1);
    below_sum += below_probs[j];
  }
  const double spare = 1.0 - p * (above + 1) - below_sum;
  std::vector<double> above_probs(above, p);
  if (above > 0) {
    double norm = 0.0;
    for (int i = 0; i < above; ++i) norm += std::pow(0.6, i);
    for (int i = 0; i < above; ++i) {
      above_probs[i] += spare * top_share * std::pow(0.6, i) / norm;
    }
  }

  float* probs = out + 3;
  float* ids = out + 3 + k;
  int slot = 0;
  int other = 1;  // pool[0] is the chosen id
  for (int i = 0; i < above && slot < k; ++i, ++slot) {
    probs[slot] = static_cast<float>(above_probs[i]);
    ids[slot] = pool[other++];
  }
  if (slot < k) {
    probs[slot] = static_cast<float>(p);
    ids[slot] = pool[0];
    ++slot;
  }
  for (int j = 0; slot < k; ++j, ++slot) {
    probs[slot] = static_cast<float>(below_probs[j]);
    ids[slot] = pool[other++];
  }
  double stored = 0.0;
  for (int i = 0; i < k; ++i) stored += probs[i];
  out[0] = static_cast<float>(p);
  out[1] = static_cast<float>(rank);
  out[2] = static_cast<float>(std::max(0.0, 1.0 - stored));
}

std::vector<double> shift_direction(const SynthConfig& config) {
  const int d = config.meta.hidden_dim;
  std::vector<double> dir(d, 0.0);
  if (config.effects.hidden_shift_dims.empty()) {
    std::fill(dir.begin(), dir.end(), 1.0);
  } else {
    for (int j : config.effects.hidden_shift_dims) dir[j] = 1.0;
  }
  double norm = 0.0;
  for (double v : dir) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : dir) v /= norm;
  return dir;
}

struct TracePlan {
  int prompt_len;
  int gen_len;
  bool hallucinated;
  Span span;  // planted range; whole response unless localized
};

InferenceTrace generate_trace(const SynthConfig& config,
                              const std::vector<double>& direction,
                              std::uint64_t stream, int index,
                              bool hallucinated) {
  Sampler rng(stream);
  const TraceMeta& meta = config.meta;
  const double sigma = config.noise_sigma;
  const Effects& fx = config.effects;

  TracePlan plan;
  plan.prompt_len = rng.uniform_int(config.prompt_len_min, config.prompt_len_max);
  plan.gen_len = rng.uniform_int(config.gen_len_min, config.gen_len_max);
  plan.hallucinated = hallucinated;
  plan.span = {0, plan.gen_len};
  if (hallucinated && config.span_mode == SpanMode::kLocalizedSpans) {
    const int start = rng.uniform_int(
        config.span_margin, plan.gen_len - config.span_len - config.span_margin);
    plan.span = {start, start + config.span_len};
  }

  InferenceTrace tr;
  char id[64];
  std::snprintf(id, sizeof(id), "%s-%06d", config.dataset_name.c_str(), index);
  tr.trace_id = id;
  tr.prompt_len = plan.prompt_len;
  tr.gen_len = plan.gen_len;
  tr.label = hallucinated ? Label::kHallucinated : Label::kFactual;
  if (hallucinated && config.span_mode == SpanMode::kLocalizedSpans) {
    tr.problematic_spans.push_back(plan.span);
  }

  const int L = meta.num_layers;
  auto planted = [&](int t) {
    return plan.hallucinated && t >= plan.span.start && t < plan.span.end;
  };

  if (meta.sections.attention) {
    tr.attention.resize(attention_float_count(meta, tr.prompt_len, tr.gen_len));
    for (int t = 0; t < tr.gen_len; ++t) {
      for (int l = 0; l < L; ++l) {
        const bool plant = planted(t) && is_planted_layer(config, l);
        for (int h = 0; h < meta.num_heads; ++h) {
          AttentionRow row(tr.prompt_len, t, sigma, rng);
          if (plant) {
            if (fx.lookback_delta > 0.0) row.shift_to_self(fx.lookback_delta);
            if (fx.entropy_delta > 0.0) {
              row.temper_to_entropy(row.entropy(1.0) - fx.entropy_delta);
            }
          }
          row.write(tr.attention.data() +
                    attention_row_offset(meta, tr.prompt_len, t, l, h));
        }
      }
    }
  }

  if (meta.sections.hidden) {
    const int d = meta.hidden_dim;
    tr.hidden.resize(hidden_float_count(meta, tr.gen_len));
    for (int t = 0; t < tr.gen_len; ++t) {
      for (int l = 0; l < L; ++l) {
        const bool shift = planted(t) && l == L - 1;
        float* out = tr.hidden.data() + (static_cast<std::size_t>(t) * L + l) * d;
        for (int j = 0; j < d; ++j) {
          double v = sigma * rng.normal();
          if (shift) v += fx.hidden_shift * direction[j];
          out[j] = static_cast<float>(v);
        }
      }
    }
  }

  if (meta.sections.activation) {
    tr.activation.resize(activation_float_count(meta, tr.gen_len));
    for (float& a : tr.activation) {
      a = static_cast<float>(gelu(0.5 + sigma * rng.normal()));
    }
  }

  if (meta.sections.logit) {
    const std::size_t rec = meta.logit_record_size();
    tr.logits.resize(logit_float_count(meta, tr.gen_len));
    for (int t = 0; t < tr.gen_len; ++t) {
      const auto pool = sample_pool(meta.vocab_size, meta.topk, rng);
      for (int l = 0; l < L; ++l) {
        const bool plant = planted(t) && is_planted_layer(config, l);
        double p = base::kProbLow + (base::kProbHigh - base::kProbLow) *
                                        normal_cdf(sigma * rng.normal());
        int rank = base_rank(normal_cdf(sigma * rng.normal()));
        const double top_share = 0.2 + 0.6 * normal_cdf(sigma * rng.normal());
        if (plant) {
          p -= fx.minprob_delta;
          rank += fx.rank_delta;
        }
        write_logit_record(meta, p, rank, top_share, pool,
                           tr.logits.data() +
                               (static_cast<std::size_t>(t) * L + l) * rec);
      }
    }
  }
  return tr;
}

}  // namespace

TraceMeta SynthConfig::default_meta() {
  TraceMeta meta;
  meta.model_name = "synthetic";
  meta.num_layers = 4;
  meta.num_heads = 2;
  meta.hidden_dim = 16;
  meta.ffn_dim = 32;
  meta.vocab_size = 1000;
  meta.topk = 8;
  meta.sections = SectionSet::all();
  return meta;
}

bool is_planted_layer(const SynthConfig& config, int layer) {
  if (config.planted_layers.empty()) return true;
  return std::find(config.planted_layers.begin(), config.planted_layers.end(),
                   layer) != config.planted_layers.end();
}

void validate_config(const SynthConfig& c) {
  validate_meta(c.meta);
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (c.n_traces < 0) fail("n_traces must be >= 0");
  if (c.prompt_len_min < 1 || c.prompt_len_max < c.prompt_len_min) {
    fail("prompt length range must satisfy 1 <= min <= max");
  }
  if (c.gen_len_min < 1 || c.gen_len_max < c.gen_len_min) {
    fail("gen length range must satisfy 1 <= min <= max");
  }
  if (!(c.halu_fraction >= 0.0 && c.halu_fraction <= 1.0)) {
    fail("halu_fraction must be in [0,1]");
  }
  if (!(c.noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (c.meta.vocab_size < c.meta.topk + 1) {
    fail("vocab_size must exceed topk for synthetic id pools");
  }
  for (int l : c.planted_layers) {
    if (l < 0 || l >= c.meta.num_layers) fail("planted layer out of range");
  }
  const Effects& fx = c.effects;
  if (fx.lookback_delta < 0.0 || fx.lookback_delta > 1.0 - base::kSelfCap) {
    fail("lookback_delta must be in [0, " +
         std::to_string(1.0 - base::kSelfCap) +
         "]; larger values force negative attention mass");
  }
  if (fx.entropy_delta < 0.0) fail("entropy_delta must be >= 0");
  if (fx.minprob_delta < 0.0 ||
      fx.minprob_delta > base::kProbLow - base::kProbFloor) {
    fail("minprob_delta must be in [0, " +
         std::to_string(base::kProbLow - base::kProbFloor) + "]");
  }
  if (fx.rank_delta < 0) fail("rank_delta must be >= 0");
  // All ranks above the chosen token must hold at least its probability.
  if ((base::kMaxBaseRank + fx.rank_delta + 1) * base::kProbHigh > 1.0) {
    fail("rank_delta too large: ranks above the chosen token cannot each "
         "carry its probability");
  }
  for (int j : fx.hidden_shift_dims) {
    if (j < 0 || j >= c.meta.hidden_dim) fail("hidden_shift_dims out of range");
  }
  if (c.span_mode == SpanMode::kLocalizedSpans) {
    if (c.span_len < 1 || c.span_margin < 0) {
      fail("span_len must be >= 1 and span_margin >= 0");
    }
    if (c.gen_len_min < c.span_len + 2 * c.span_margin) {
      fail("gen_len_min too short for span_len plus margins");
    }
  }
  if (fx.lookback_delta > 0.0 || fx.entropy_delta > 0.0) {
    if (!c.meta.sections.attention) fail("attention effects need attention");
  }
  // Noise-free rows are uniform over earlier positions; sharpening them is a
  // no-op.
  if (fx.entropy_delta > 0.0 && c.noise_sigma == 0.0) {
    fail("entropy_delta needs noise_sigma > 0");
  }
  if ((fx.minprob_delta > 0.0 || fx.rank_delta > 0) && !c.meta.sections.logit) {
    fail("logit effects need the logit section");
  }
  if (fx.hidden_shift != 0.0 && !c.meta.sections.hidden) {
    fail("hidden_shift needs the hidden section");
  }
}

TraceSet generate(const SynthConfig& config, std::uint64_t seed, int workers) {
  validate_config(config);
  TraceSet set;
  set.meta = config.meta;
  set.dataset_name = config.dataset_name;

  const int n = config.n_traces;
  const auto n_halu =
      static_cast<int>(std::llround(config.halu_fraction * n));
  std::vector<char> halu(n, 0);
  std::fill(halu.begin(), halu.begin() + n_halu, 1);
  std::mt19937_64 order_rng(splitmix64(seed ^ 0x5eedULL));
  std::shuffle(halu.begin(), halu.end(), order_rng);

  const auto direction = shift_direction(config);
  set.traces.resize(n);
  detail::parallel_for(n, workers, [&](int i) {
    const std::uint64_t stream =
        splitmix64(splitmix64(seed) + static_cast<std::uint64_t>(i));
    set.traces[i] =
        generate_trace(config, direction, stream, i, halu[i] != 0);
  });
  return set;
}

namespace {

// E[f(p)] for p = lo + (hi-lo) * Phi(sigma z), z ~ N(0,1), by Simpson's rule
// over the uniform variable u = Phi(sigma z) when sigma > 0.
template <typename F>
double expect_over_prob(double sigma, F&& f) {
  const double lo = base::kProbLow;
  const double hi = base::kProbHigh;
  if (sigma == 0.0) return f(lo + 0.5 * (hi - lo));
  // u = Phi(sigma z) has density phi(Phi^-1(u)/sigma) / (sigma phi(Phi^-1 u));
  // integrate over z directly instead.
  const int n = 4000;
  const double zmax = 9.0;
  const double h = 2.0 * zmax / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = -zmax + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    acc += w * pdf * f(lo + (hi - lo) * normal_cdf(sigma * z));
  }
  return acc * h / 3.0;
}

}  // namespace

double expected_separation(const SynthConfig& config, FeatureId feature) {
  validate_config(config);
  if (config.span_mode != SpanMode::kWholeResponse) {
    throw ConfigError(
        "expected_separation is defined for whole_response span mode only");
  }
  const Effects& fx = config.effects;
  switch (feature) {
    case FeatureId::kLookbackRatio:
      return -fx.lookback_delta;
    case FeatureId::kAttentionEntropy:
      if (fx.lookback_delta != 0.0) {
        throw ConfigError(
            "attention_entropy gap has no closed form under a lookback shift");
      }
      return -fx.entropy_delta;
    case FeatureId::kKeyTokenRatio: {
      // Prompt share of the previous-position mass is T_in/(T_in+t) in
      // expectation (exchangeable weights); the shift scales it by delta.
      double acc = 0.0;
      double count = 0.0;
      for (int tin = config.prompt_len_min; tin <= config.prompt_len_max;
           ++tin) {
        for (int tout = config.gen_len_min; tout <= config.gen_len_max;
             ++tout) {
          double inner = 0.0;
          for (int t = 0; t < tout; ++t) {
            inner += static_cast<double>(tin) / (tin + t);
          }
          acc += inner;
          count += tout;
        }
      }
      return -fx.lookback_delta * acc / count;
    }
    case FeatureId::kHiddenState:
      return fx.hidden_shift;
    case FeatureId::kActivationMapDiff:
    case FeatureId::kActivationEntropy:
      return 0.0;
    case FeatureId::kMinTokenProb:
      return -fx.minprob_delta;
    case FeatureId::kMaxTokenRank:
      return fx.rank_delta;
    case FeatureId::kJointTokenProb: {
      if (fx.minprob_delta == 0.0) return 0.0;
      const double d = fx.minprob_delta;
      return expect_over_prob(config.noise_sigma, [d](double p) {
        return std::log(p - d) - std::log(p);
      });
    }
    case FeatureId::kAvgJsd:
      if (fx.minprob_delta != 0.0 || fx.rank_delta != 0) {
        throw ConfigError("avg_jsd gap has no closed form under logit effects");
      }
      return 0.0;
  }
  throw ConfigError("unknown feature id");
}

namespace {

using nlohmann::json;

json meta_json(const TraceMeta& m) {
  json sections = json::array();
  for (Section s : {Section::kAttention, Section::kHidden, Section::kActivation,
                    Section::kLogit}) {
    if (m.sections.has(s)) sections.push_back(std::string(section_name(s)));
  }
  return json{{"model_name", m.model_name}, {"num_layers", m.num_layers},
              {"num_heads", m.num_heads},   {"hidden_dim", m.hidden_dim},
              {"ffn_dim", m.ffn_dim},       {"vocab_size", m.vocab_size},
              {"topk", m.topk},             {"sections_present", sections}};
}

TraceMeta meta_from(const json& j, TraceMeta m) {
  m.model_name = j.value("model_name", m.model_name);
  m.num_layers = j.value("num_layers", m.num_layers);
  m.num_heads = j.value("num_heads", m.num_heads);
  m.hidden_dim = j.value("hidden_dim", m.hidden_dim);
  m.ffn_dim = j.value("ffn_dim", m.ffn_dim);
  m.vocab_size = j.value("vocab_size", m.vocab_size);
  m.topk = j.value("topk", m.topk);
  if (j.contains("sections_present")) {
    m.sections = SectionSet{};
    for (const auto& s : j["sections_present"]) {
      const auto name = s.get<std::string>();
      bool known = false;
      for (Section sec : {Section::kAttention, Section::kHidden,
                          Section::kActivation, Section::kLogit}) {
        if (name == section_name(sec)) {
          m.sections.set(sec, true);
          known = true;
        }
      }
      if (!known) throw ConfigError("unknown section '" + name + "'");
    }
  }
  return m;
}

}  // namespace

SynthConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("synth config is not valid JSON: ") +
                      e.what());
  }
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  // Typos would otherwise silently fall back to defaults.
  static const std::unordered_set<std::string> known = {
      "n_traces", "prompt_len", "gen_len", "meta", "halu_fraction",
      "noise_sigma", "effects", "span_mode", "span_len", "span_margin",
      "planted_layers", "dataset_name"};
  static const std::unordered_set<std::string> known_effects = {
      "lookback_delta", "entropy_delta", "minprob_delta", "rank_delta",
      "hidden_shift", "hidden_shift_dims"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown synth config key '" + k + "'");
  }
  if (j.contains("effects") && j["effects"].is_object()) {
    for (const auto& [k, v] : j["effects"].items()) {
      if (!known_effects.count(k)) throw ConfigError("unknown effect '" + k + "'");
    }
  }
  SynthConfig c;
  try {
    c.n_traces = j.value("n_traces", c.n_traces);
    if (j.contains("prompt_len")) {
      c.prompt_len_min = j["prompt_len"].at(0).get<int>();
      c.prompt_len_max = j["prompt_len"].at(1).get<int>();
    }
    if (j.contains("gen_len")) {
      c.gen_len_min = j["gen_len"].at(0).get<int>();
      c.gen_len_max = j["gen_len"].at(1).get<int>();
    }
    if (j.contains("meta")) c.meta = meta_from(j["meta"], c.meta);
    c.halu_fraction = j.value("halu_fraction", c.halu_fraction);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    if (j.contains("effects")) {
      const json& e = j["effects"];
      c.effects.lookback_delta = e.value("lookback_delta", 0.0);
      c.effects.entropy_delta = e.value("entropy_delta", 0.0);
      c.effects.minprob_delta = e.value("minprob_delta", 0.0);
      c.effects.rank_delta = e.value("rank_delta", 0);
      c.effects.hidden_shift = e.value("hidden_shift", 0.0);
      c.effects.hidden_shift_dims =
          e.value("hidden_shift_dims", std::vector<int>{});
    }
    const std::string mode = j.value("span_mode", std::string("whole_response"));
    if (mode == "whole_response") {
      c.span_mode = SpanMode::kWholeResponse;
    } else if (mode == "localized_spans") {
      c.span_mode = SpanMode::kLocalizedSpans;
    } else {
      throw ConfigError("unknown span_mode '" + mode + "'");
    }
    c.span_len = j.value("span_len", c.span_len);
    c.span_margin = j.value("span_margin", c.span_margin);
    c.planted_layers = j.value("planted_layers", std::vector<int>{});
    c.dataset_name = j.value("dataset_name", c.dataset_name);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synth config field: ") + e.what());
  }
  validate_config(c);
  return c;
}

std::string config_to_json_text(const SynthConfig& c) {
  json j;
  j["n_traces"] = c.n_traces;
  j["prompt_len"] = {c.prompt_len_min, c.prompt_len_max};
  j["gen_len"] = {c.gen_len_min, c.gen_len_max};
  j["meta"] = meta_json(c.meta);
  j["halu_fraction"] = c.halu_fraction;
  j["noise_sigma"] = c.noise_sigma;
  j["effects"] = {{"lookback_delta", c.effects.lookback_delta},
                  {"entropy_delta", c.effects.entropy_delta},
                  {"minprob_delta", c.effects.minprob_delta},
                  {"rank_delta", c.effects.rank_delta},
                  {"hidden_shift", c.effects.hidden_shift},
                  {"hidden_shift_dims", c.effects.hidden_shift_dims}};
  j["span_mode"] = c.span_mode == SpanMode::kWholeResponse ? "whole_response"
                                                           : "localized_spans";
  j["span_len"] = c.span_len;
  j["span_margin"] = c.span_margin;
  j["planted_layers"] = c.planted_layers;
  j["dataset_name"] = c.dataset_name;
  return j.dump(2);
}

}  // namespace haluprobe::synth
