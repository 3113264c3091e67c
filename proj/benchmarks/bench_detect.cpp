#include <benchmark/benchmark.h>

#include "haluprobe/detect.h"
#include "haluprobe/features.h"
#include "haluprobe/synth.h"

using namespace haluprobe;

namespace {

const FeatureTable& bench_table() {
  static const FeatureTable table = [] {
    synth::SynthConfig c;
    c.n_traces = 400;
    c.effects.lookback_delta = 0.03;
    c.effects.rank_delta = 1;
    return features::extract_feature_table(synth::generate(c, 2), features::FeatureConfig{},
                                           SelectionStrategy::all_tokens());
  }();
  return table;
}

void BM_Train(benchmark::State& state, detect::Family family) {
  const FeatureTable& t = bench_table();
  detect::TrainConfig c;
  c.epochs = 50;
  for (auto _ : state) benchmark::DoNotOptimize(detect::train(family, t, c));
  state.SetItemsProcessed(state.iterations() * t.rows());
}

void BM_Predict(benchmark::State& state, detect::Family family) {
  const FeatureTable& t = bench_table();
  detect::TrainConfig c;
  c.epochs = 20;
  const auto m = detect::train(family, t, c);
  for (auto _ : state) benchmark::DoNotOptimize(detect::predict(m, t));
  state.SetItemsProcessed(state.iterations() * t.rows());
}

}  // namespace

BENCHMARK_CAPTURE(BM_Train, logreg, detect::Family::kLogReg)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Train, mlp, detect::Family::kMlp)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Train, siamese, detect::Family::kSiamese)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, logreg, detect::Family::kLogReg);
BENCHMARK_CAPTURE(BM_Predict, mlp, detect::Family::kMlp);
BENCHMARK_CAPTURE(BM_Predict, siamese, detect::Family::kSiamese);
