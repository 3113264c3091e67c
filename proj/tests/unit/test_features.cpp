#include <doctest.h>

#include <cmath>
#include <map>

#include "builders.h"
#include "closed_form.h"
#include "haluprobe/errors.h"
#include "haluprobe/features.h"
#include "haluprobe/synth.h"
#include "oracles.h"

using namespace haluprobe;
using namespace haluprobe::features;
using haluprobe::testing::blank_set;
using haluprobe::testing::put_logit;
using haluprobe::testing::random_trace_set;
using haluprobe::testing::uniform_attention_set;

namespace {

void set_map(TraceSet& s, int t, int l, const std::vector<float>& a) {
  auto& tr = s.traces[0];
  std::copy(a.begin(), a.end(),
            tr.activation.begin() + (static_cast<std::size_t>(t) * s.meta.num_layers + l) *
                                        s.meta.ffn_dim);
}

// Three-token, one-layer set with the given chosen probabilities and ranks.
TraceSet logit_set(const std::vector<float>& probs, const std::vector<int>& ranks) {
  const int T = static_cast<int>(probs.size());
  TraceSet s = blank_set(1, T, 1, 1, 1, 1, 1, 10);
  for (int t = 0; t < T; ++t) {
    put_logit(s.traces[0].logits.data() + t * s.meta.logit_record_size(), probs[t],
              ranks[t], 0.0f, {1.0f}, {0});
  }
  return s;
}

}  // namespace

TEST_CASE("closed-form values are exact") {
  for (const auto& c : haluprobe::testing::closed_form_checks()) {
    CHECK_MESSAGE(std::abs(c.got - c.want) <= 1e-9, c.name);
  }
}

TEST_CASE("lookback ratio") {
  TraceSet s = blank_set(2, 2, 1, 1, 1, 1, 1, 2);
  auto& tr = s.traces[0];
  // All mass on self.
  tr.attention[attention_row_offset(s.meta, 2, 1, 0, 0) + 3] = 1.0f;
  CHECK(lookback_ratio(s.meta, tr, 1, 0, 0) == 0.0);
}

TEST_CASE("key token ratio") {
  const TraceSet u = uniform_attention_set(3, 4, 1, 1);
  const auto& tr = u.traces[0];
  const std::vector<int> prompt = {0, 1, 2};
  CHECK(key_token_ratio(u.meta, tr, 1, 0, 0, prompt) == doctest::Approx(3.0 / 5.0).epsilon(1e-7));
  const std::vector<int> full = {0, 1, 2, 3, 4};
  CHECK(key_token_ratio(u.meta, tr, 1, 0, 0, full) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(key_token_ratio(u.meta, tr, 1, 0, 0, {}) == 0.0);
  const std::vector<int> beyond = {5};
  CHECK_THROWS_AS(key_token_ratio(u.meta, tr, 1, 0, 0, beyond), BoundsError);
}

TEST_CASE("hidden state feature") {
  const TraceSet r = random_trace_set({.n_traces = 1, .hidden_dim = 5}, 3);
  const auto& tr = r.traces[0];
  const auto h = hidden_state_feature(r.meta, tr, 0);
  CHECK(h.size() == 5);
  CHECK(h[2] == tr.hidden_state(r.meta, 0, r.meta.num_layers - 1)[2]);
  CHECK_THROWS_AS(hidden_state_feature(r.meta, tr, tr.gen_len), BoundsError);
}

TEST_CASE("activation entropy") {
  TraceSet s = blank_set(1, 3, 1, 1, 1, 4, 1, 2);
  set_map(s, 0, 0, {0.7f, 0.7f, 0.7f, 0.7f});
  set_map(s, 1, 0, {0.0f, -1.0f, 2.5f, -0.2f});
  set_map(s, 2, 0, {-1.0f, -2.0f, 0.0f, -0.5f});
  CHECK(activation_entropy(s.meta, s.traces[0], 0, 0) == doctest::Approx(std::log(4.0)));
  CHECK(activation_entropy(s.meta, s.traces[0], 1, 0) == 0.0);
  CHECK(activation_entropy(s.meta, s.traces[0], 2, 0) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("activation map diff") {
  TraceSet s = blank_set(1, 3, 1, 1, 1, 4, 1, 2);
  set_map(s, 0, 0, {0.5f, -1.0f, 2.0f, 0.0f});
  set_map(s, 1, 0, {0.5f, -1.0f, 2.0f, 0.0f});
  set_map(s, 2, 0, {0.25f, -1.25f, 1.75f, -0.25f});
  CHECK(activation_map_diff(s.meta, s.traces[0], 1, 0) == 0.0);
  CHECK(activation_map_diff(s.meta, s.traces[0], 2, 0) == doctest::Approx(0.25));
  CHECK_THROWS_AS(activation_map_diff(s.meta, s.traces[0], 0, 0), ConfigError);
}

TEST_CASE("logit features") {
  const TraceSet s = logit_set({0.9f, 0.2f, 0.5f}, {1, 1, 7});
  const auto& tr = s.traces[0];
  CHECK(min_token_prob(s.meta, tr, {0, 3}, 0) == doctest::Approx(0.2));
  CHECK(min_token_prob(s.meta, tr, {2, 3}, 0) == doctest::Approx(0.5));
  CHECK(max_token_rank(s.meta, tr, {0, 3}, 0) == 7);
  CHECK(max_token_rank(s.meta, tr, {1, 2}, 0) == 1);

  const TraceSet h = logit_set({0.5f, 0.5f}, {1, 1});
  CHECK(joint_token_prob(h.meta, h.traces[0], {0, 1}, 0) == doctest::Approx(std::log(0.5)));
  CHECK(joint_token_prob(h.meta, h.traces[0], {0, 2}, 0) == doctest::Approx(std::log(0.25)));

  // Zero probability hits the floor instead of -inf.
  const TraceSet z = logit_set({0.0f}, {3});
  CHECK(joint_token_prob(z.meta, z.traces[0], {0, 1}, 0) == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("single-call features agree with the oracle") {
  synth::SynthConfig c;
  c.n_traces = 3;
  c.effects.lookback_delta = 0.05;
  const TraceSet s = synth::generate(c, 7);
  const auto& tr = s.traces[0];
  const FeatureConfig fc;
  auto want = [&](FeatureId f, int l, int h, Span u) {
    return oracle::feature_value(s.meta, tr, {f, l, h, -1}, u, fc);
  };
  CHECK(lookback_ratio(s.meta, tr, 2, 0, 0) ==
        doctest::Approx(want(FeatureId::kLookbackRatio, 0, 0, {2, 3})).epsilon(1e-6));
  CHECK(attention_entropy(s.meta, tr, 3, 1, 1) ==
        doctest::Approx(want(FeatureId::kAttentionEntropy, 1, 1, {3, 4})).epsilon(1e-6));
  CHECK(activation_map_diff(s.meta, tr, 4, 1) ==
        doctest::Approx(want(FeatureId::kActivationMapDiff, 1, -1, {4, 5})).epsilon(1e-6));
  CHECK(joint_token_prob(s.meta, tr, {2, 10}, 0) ==
        doctest::Approx(want(FeatureId::kJointTokenProb, 0, -1, {2, 10})).epsilon(1e-9));
  CHECK(avg_jsd(s.meta, tr, {0, 6}, 0) ==
        doctest::Approx(want(FeatureId::kAvgJsd, 0, -1, {0, 6})).epsilon(1e-6));
}

TEST_CASE("extracted tables match the oracle") {
  const TraceSet r = random_trace_set({.n_traces = 100}, 2024);
  for (const char* strat : {"all", "per", "first", "last", "win:2,1", "win:3,2"}) {
    for (auto gran : {HeadGranularity::kPerHead, HeadGranularity::kLayerMean}) {
      FeatureConfig fc;
      fc.head_granularity = gran;
      const FeatureTable t = extract_feature_table(r, fc, parse_strategy(strat));
      double worst = 0;
      CHECK_MESSAGE(oracle::compare_table(r, t, fc, 1e-6, &worst) == 0, strat);
    }
  }
  FeatureConfig mx;
  mx.aggregation = Aggregation::kMax;
  const FeatureTable t = extract_feature_table(r, mx, SelectionStrategy::all_tokens());
  CHECK(oracle::compare_table(r, t, mx, 1e-6) == 0);

  FeatureConfig em;
  em.key_mask_source = KeyMaskSource::kExplicitMask;
  em.explicit_mask = {0, 2, 5};
  const FeatureTable e = extract_feature_table(r, em, SelectionStrategy::per_token());
  CHECK(oracle::compare_table(r, e, em, 1e-6) == 0);
}

TEST_CASE("output does not depend on workers") {
  const TraceSet r = random_trace_set({.n_traces = 40}, 8);
  const FeatureConfig fc;
  CHECK(extract_feature_table(r, fc, SelectionStrategy::sliced(2, 1), 1) ==
        extract_feature_table(r, fc, SelectionStrategy::sliced(2, 1), 4));
}

TEST_CASE("layout shapes") {
  TraceMeta m = synth::SynthConfig::default_meta();
  m.hidden_dim = 16;
  m.ffn_dim = 32;
  FeatureConfig lb;
  lb.enabled = {FeatureId::kLookbackRatio};
  lb.head_granularity = HeadGranularity::kPerHead;
  CHECK(make_layout(m, lb).size() ==
        static_cast<std::size_t>(m.num_layers * m.num_heads));

  const FeatureConfig all;
  const auto layout = make_layout(m, all);
  // Count from the descriptor itself: one column per layer for every
  // layered feature, one per dimension for the hidden state.
  std::size_t layered = 0, dims = 0;
  for (const auto& e : layout) {
    if (e.feature == FeatureId::kHiddenState) {
      ++dims;
      CHECK(e.layer == m.num_layers - 1);
    } else {
      ++layered;
      CHECK(e.head == -1);
    }
  }
  CHECK(dims == 16);
  CHECK(layered == 9u * m.num_layers);
  CHECK(layout.size() == layered + dims);
}

TEST_CASE("value ranges hold on generated data") {
  synth::SynthConfig c;
  c.n_traces = 30;
  c.effects.lookback_delta = 0.1;
  c.effects.rank_delta = 3;
  const TraceSet s = synth::generate(c, 5);
  FeatureConfig fc;
  fc.head_granularity = HeadGranularity::kPerHead;
  const FeatureTable t = extract_feature_table(s, fc, SelectionStrategy::per_token());
  const double ln2 = std::log(2.0);
  std::map<std::string, const InferenceTrace*> by_id;
  for (const auto& tr : s.traces) by_id[tr.trace_id] = &tr;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto row = t.row(i);
    const int n_ctx = by_id.at(t.unit(i).trace_id)->context_len(t.unit(i).range.start);
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const double v = row[j];
      REQUIRE(std::isfinite(v));
      switch (t.layout()[j].feature) {
        case FeatureId::kLookbackRatio:
        case FeatureId::kKeyTokenRatio:
        case FeatureId::kMinTokenProb:
          CHECK((v >= 0.0 && v <= 1.0));
          break;
        case FeatureId::kAttentionEntropy:
          CHECK((v >= 0.0 && v <= std::log(n_ctx) + 1e-9));
          break;
        case FeatureId::kActivationEntropy:
          CHECK((v >= 0.0 && v <= std::log(s.meta.ffn_dim) + 1e-9));
          break;
        case FeatureId::kAvgJsd:
          CHECK((v >= 0.0 && v <= ln2));
          break;
        case FeatureId::kJointTokenProb:
          CHECK(v <= 0.0);
          break;
        case FeatureId::kMaxTokenRank:
          CHECK(v >= 1.0);
          break;
        default:
          break;
      }
    }
  }
}

TEST_CASE("null synthetic set: cohort gaps are within noise of zero") {
  synth::SynthConfig c;
  c.n_traces = 600;
  const TraceSet s = synth::generate(c, 99);
  const FeatureConfig fc;
  const FeatureTable t = extract_feature_table(s, fc, SelectionStrategy::all_tokens());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    double sum[2] = {0, 0}, sq[2] = {0, 0}, n[2] = {0, 0};
    for (std::size_t i = 0; i < t.rows(); ++i) {
      const int k = t.unit(i).label == Label::kHallucinated;
      const double v = t.row(i)[j];
      sum[k] += v;
      sq[k] += v * v;
      n[k] += 1;
    }
    double se2 = 0;
    for (int k = 0; k < 2; ++k) {
      const double mean = sum[k] / n[k];
      se2 += (sq[k] / n[k] - mean * mean) / n[k];
    }
    const double gap = sum[1] / n[1] - sum[0] / n[0];
    CHECK_MESSAGE(std::abs(gap) <= 4.5 * std::sqrt(se2) + 1e-12, t.layout()[j].name());
  }
}

TEST_CASE("configuration errors") {
  const TraceSet r = random_trace_set({.n_traces = 3}, 1);
  FeatureConfig mx;
  mx.aggregation = Aggregation::kMax;
  CHECK_THROWS_AS(extract_feature_table(r, mx, SelectionStrategy::per_token()), ConfigError);
  FeatureConfig none;
  none.enabled.clear();
  CHECK_THROWS_AS(extract_feature_table(r, none, SelectionStrategy::per_token()), ConfigError);

  TraceSet no_act = r;
  no_act.meta.sections.activation = false;
  for (auto& tr : no_act.traces) tr.activation.clear();
  CHECK_THROWS_AS(extract_feature_table(no_act, FeatureConfig{}, SelectionStrategy::per_token()),
                  ConfigError);
  FeatureConfig attn_only;
  attn_only.enabled = {FeatureId::kLookbackRatio, FeatureId::kMinTokenProb};
  CHECK(extract_feature_table(no_act, attn_only, SelectionStrategy::per_token()).cols() > 0);
}
