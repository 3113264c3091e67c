#include <benchmark/benchmark.h>

#include "haluprobe/features.h"
#include "haluprobe/synth.h"

using namespace haluprobe;

namespace {

const TraceSet& bench_set() {
  static const TraceSet set = [] {
    synth::SynthConfig c;
    c.n_traces = 50;
    c.effects.lookback_delta = 0.05;
    return synth::generate(c, 1);
  }();
  return set;
}

std::size_t token_count(const TraceSet& set) {
  std::size_t n = 0;
  for (const auto& tr : set.traces) n += tr.gen_len;
  return n;
}

// Table extraction with a single feature enabled; items are generated tokens.
void BM_Feature(benchmark::State& state, FeatureId id, const char* strategy) {
  const TraceSet& set = bench_set();
  features::FeatureConfig fc;
  fc.enabled = {id};
  const SelectionStrategy s = parse_strategy(strategy);
  for (auto _ : state) {
    benchmark::DoNotOptimize(features::extract_feature_table(set, fc, s));
  }
  state.SetItemsProcessed(state.iterations() * token_count(set));
}

void BM_AllFeatures(benchmark::State& state) {
  const TraceSet& set = bench_set();
  const features::FeatureConfig fc;
  const SelectionStrategy s = SelectionStrategy::sliced(static_cast<int>(state.range(0)), static_cast<int>(state.range(0) / 2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(features::extract_feature_table(set, fc, s));
  }
  state.SetItemsProcessed(state.iterations() * token_count(set));
}

void BM_Synthesize(benchmark::State& state) {
  synth::SynthConfig c;
  c.n_traces = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(synth::generate(c, 3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

#define HP_FEATURE_BENCH(name, id)                                     \
  BENCHMARK_CAPTURE(BM_Feature, name##_all, FeatureId::id, "all");     \
  BENCHMARK_CAPTURE(BM_Feature, name##_win8_4, FeatureId::id, "win:8,4")

HP_FEATURE_BENCH(lookback_ratio, kLookbackRatio);
HP_FEATURE_BENCH(attention_entropy, kAttentionEntropy);
HP_FEATURE_BENCH(key_token_ratio, kKeyTokenRatio);
HP_FEATURE_BENCH(hidden_state, kHiddenState);
HP_FEATURE_BENCH(activation_entropy, kActivationEntropy);
HP_FEATURE_BENCH(activation_map_diff, kActivationMapDiff);
HP_FEATURE_BENCH(min_token_prob, kMinTokenProb);
HP_FEATURE_BENCH(max_token_rank, kMaxTokenRank);
HP_FEATURE_BENCH(joint_token_prob, kJointTokenProb);
HP_FEATURE_BENCH(avg_jsd, kAvgJsd);

BENCHMARK(BM_AllFeatures)->Arg(2)->Arg(8)->Arg(32);
BENCHMARK(BM_Synthesize)->Arg(10)->Arg(100);
