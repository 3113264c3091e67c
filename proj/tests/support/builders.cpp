#include "builders.h"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <fstream>
#include <iterator>
#include <numeric>

namespace haluprobe::testing {

namespace fs = std::filesystem;

void put_logit(float* rec, float chosen_prob, int chosen_rank, float tail,
               const std::vector<float>& probs, const std::vector<int>& ids) {
  rec[0] = chosen_prob;
  rec[1] = static_cast<float>(chosen_rank);
  rec[2] = tail;
  const std::size_t k = probs.size();
  for (std::size_t i = 0; i < k; ++i) {
    rec[3 + i] = probs[i];
    rec[3 + k + i] = static_cast<float>(ids[i]);
  }
}

namespace {

std::vector<float> simplex(std::mt19937_64& rng, std::size_t n, bool zeros) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = u(rng);
  if (zeros && n > 1) {
    for (auto& x : w) {
      if (u(rng) < 0.25) x = 0.0;
    }
  }
  if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0) w.back() = 1.0;
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(w[i] / s);
  return out;
}

}  // namespace

TraceSet random_trace_set(const RandomSetShape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  TraceSet set;
  set.dataset_name = "random";
  set.meta.model_name = "random";
  set.meta.num_layers = pick(1, s.max_layers);
  set.meta.num_heads = pick(1, s.max_heads);
  set.meta.hidden_dim = s.hidden_dim;
  set.meta.ffn_dim = s.ffn_dim;
  set.meta.vocab_size = s.vocab;
  set.meta.topk = s.topk;
  set.meta.sections = SectionSet::all();
  const TraceMeta& m = set.meta;
  const int K = m.topk;

  for (int i = 0; i < s.n_traces; ++i) {
    InferenceTrace tr;
    tr.trace_id = "r" + std::to_string(i);
    tr.prompt_len = pick(0, s.max_prompt);
    tr.gen_len = pick(1, s.max_gen);
    tr.label = u(rng) < 0.5 ? Label::kHallucinated : Label::kFactual;
    for (int t = 0; t < tr.gen_len; ++t) {
      for (int l = 0; l < m.num_layers; ++l) {
        for (int h = 0; h < m.num_heads; ++h) {
          const auto row = simplex(rng, tr.context_len(t), true);
          tr.attention.insert(tr.attention.end(), row.begin(), row.end());
        }
      }
    }
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int k = 0; k < tr.gen_len * m.num_layers * m.hidden_dim; ++k) {
      tr.hidden.push_back(static_cast<float>(n01(rng)));
    }
    for (int t = 0; t < tr.gen_len; ++t) {
      for (int l = 0; l < m.num_layers; ++l) {
        // Now and then an all-nonpositive map.
        const double bias = u(rng) < 0.1 ? -5.0 : 0.3;
        for (int j = 0; j < m.ffn_dim; ++j) {
          tr.activation.push_back(static_cast<float>(bias + n01(rng)));
        }
      }
    }
    const std::size_t rec = m.logit_record_size();
    tr.logits.resize(static_cast<std::size_t>(tr.gen_len) * m.num_layers * rec);
    for (int t = 0; t < tr.gen_len; ++t) {
      for (int l = 0; l < m.num_layers; ++l) {
        auto w = simplex(rng, static_cast<std::size_t>(K) + 1, false);
        const float tail = w.back();
        std::vector<float> probs(w.begin(), w.end() - 1);
        std::sort(probs.begin(), probs.end(), std::greater<>());
        std::vector<int> ids(m.vocab_size);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(K);
        const int rank = pick(1, K + 3);
        float chosen = rank <= K ? probs[rank - 1]
                                 : static_cast<float>(u(rng) * probs[K - 1]);
        if (rank > K && u(rng) < 0.2) chosen = 0.0f;  // exercises the log floor
        put_logit(tr.logits.data() +
                      (static_cast<std::size_t>(t) * m.num_layers + l) * rec,
                  chosen, rank, tail, probs, ids);
      }
    }
    set.traces.push_back(std::move(tr));
  }
  return set;
}

TraceSet uniform_attention_set(int prompt_len, int gen_len, int layers,
                               int heads) {
  TraceSet set;
  set.meta.model_name = "uniform";
  set.meta.num_layers = layers;
  set.meta.num_heads = heads;
  set.meta.sections.attention = true;
  InferenceTrace tr;
  tr.trace_id = "u0";
  tr.prompt_len = prompt_len;
  tr.gen_len = gen_len;
  tr.label = Label::kFactual;
  for (int t = 0; t < gen_len; ++t) {
    const int n = tr.context_len(t);
    for (int k = 0; k < layers * heads * n; ++k) {
      tr.attention.push_back(1.0f / static_cast<float>(n));
    }
  }
  set.traces.push_back(std::move(tr));
  return set;
}

FeatureTable make_table(const std::vector<std::vector<double>>& rows,
                        const std::vector<Label>& labels) {
  FeatureLayout layout;
  const std::size_t d = rows.empty() ? 1 : rows.front().size();
  for (std::size_t j = 0; j < d; ++j) {
    layout.push_back({FeatureId::kHiddenState, 0, -1, static_cast<int>(j)});
  }
  FeatureTable table(std::move(layout), "all");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    table.add_row({"t" + std::to_string(i), {0, 1}, labels[i]}, rows[i]);
  }
  return table;
}

FeatureTable gaussian_table(int n, int dims, double shift, int shift_dims,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  const double per_dim = shift / std::sqrt(static_cast<double>(shift_dims));
  for (int i = 0; i < n; ++i) {
    const bool halu = i % 2 == 1;
    std::vector<double> x(dims);
    for (int j = 0; j < dims; ++j) {
      x[j] = n01(rng) + (halu && j < shift_dims ? per_dim : 0.0);
    }
    rows.push_back(std::move(x));
    labels.push_back(halu ? Label::kHallucinated : Label::kFactual);
  }
  return make_table(rows, labels);
}

FeatureTable xor_table(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.05);
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  for (int i = 0; i < n; ++i) {
    const int q = i % 4;
    const double sx = (q & 1) ? 1.0 : -1.0;
    const double sy = (q & 2) ? 1.0 : -1.0;
    rows.push_back({sx * u(rng) + jitter(rng), sy * u(rng) + jitter(rng)});
    labels.push_back(sx != sy ? Label::kHallucinated : Label::kFactual);
  }
  return make_table(rows, labels);
}

fs::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path p = fs::temp_directory_path() /
                     ("haluprobe_test_" + tag + "_" +
                      std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace haluprobe::testing
