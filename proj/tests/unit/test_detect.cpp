#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "builders.h"
#include "haluprobe/detect.h"
#include "haluprobe/errors.h"
#include "mutants.h"
#include "oracles.h"

using namespace haluprobe;
using namespace haluprobe::detect;
using namespace haluprobe::testing;

namespace {

double accuracy(const DetectorModel& m, const FeatureTable& t) {
  const auto p = predict(m, t);
  double ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ok += (p[i] >= 0.5) == (t.unit(i).label == Label::kHallucinated);
  }
  return ok / static_cast<double>(p.size());
}

TrainConfig fast() {
  TrainConfig c;
  c.epochs = 200;
  c.mlp_hidden = {16};
  c.embedding_dim = 4;
  c.siamese_pairs = 256;
  return c;
}

FeatureTable relabeled(const FeatureTable& t, std::uint64_t seed) {
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    rows.emplace_back(t.row(i).begin(), t.row(i).end());
    labels.push_back(t.unit(i).label);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);
  return make_table(rows, labels);
}

}  // namespace

TEST_CASE("standardizer") {
  SUBCASE("constant column is flagged and maps to zero") {
    const FeatureTable t = make_table({{3.0, 1.0}, {3.0, 2.0}, {3.0, 4.0}},
                                      {Label::kFactual, Label::kFactual, Label::kHallucinated});
    const Standardizer s = fit_standardizer(t);
    CHECK(s.degenerate[0] == 1);
    CHECK(s.degenerate[1] == 0);
    for (std::size_t i = 0; i < t.rows(); ++i) {
      CHECK(apply_standardizer(s, t.row(i))[0] == 0.0);
    }
  }
  SUBCASE("mean and stddev match a direct recomputation") {
    const FeatureTable t = gaussian_table(500, 3, 2.0, 1, 4);
    const Standardizer s = fit_standardizer(t);
    for (std::size_t j = 0; j < 3; ++j) {
      long double sum = 0, sq = 0;
      for (std::size_t i = 0; i < t.rows(); ++i) sum += t.row(i)[j];
      const long double mean = sum / t.rows();
      for (std::size_t i = 0; i < t.rows(); ++i) {
        sq += (t.row(i)[j] - mean) * (t.row(i)[j] - mean);
      }
      CHECK(s.mean[j] == doctest::Approx(double(mean)).epsilon(1e-12));
      CHECK(s.stddev[j] == doctest::Approx(std::sqrt(double(sq / t.rows()))).epsilon(1e-9));
    }
  }
  SUBCASE("already-standard column is unchanged") {
    // Exactly mean 0, population stddev 1.
    const FeatureTable t = make_table({{-1.0}, {1.0}, {-1.0}, {1.0}},
                                      {Label::kFactual, Label::kFactual,
                                       Label::kHallucinated, Label::kHallucinated});
    const Standardizer s = fit_standardizer(t);
    for (std::size_t i = 0; i < t.rows(); ++i) {
      CHECK(std::abs(apply_standardizer(s, t.row(i))[0] - t.row(i)[0]) <= 1e-6);
    }
  }
  CHECK_THROWS_AS(fit_standardizer(FeatureTable{}), TrainingError);
}

TEST_CASE("separable data reaches training accuracy 1.0") {
  const FeatureTable t = gaussian_table(200, 2, 12.0, 2, 3);
  for (Family f : {Family::kLogReg, Family::kMlp, Family::kSiamese, Family::kEnsemble}) {
    CHECK_MESSAGE(accuracy(train(f, t, fast()), t) == 1.0, family_name(f));
  }
}

TEST_CASE("XOR: mlp fits it, logreg cannot") {
  const FeatureTable t = xor_table(400, 5);
  TrainConfig c = fast();
  c.epochs = 600;
  CHECK(accuracy(train_mlp(t, c), t) >= 0.95);
  CHECK(accuracy(train_logreg(t, c), t) <= 0.6);
}

TEST_CASE("training is deterministic in the seed") {
  const FeatureTable t = gaussian_table(100, 3, 1.0, 3, 6);
  for (Family f : {Family::kLogReg, Family::kMlp, Family::kSiamese, Family::kEnsemble}) {
    TrainConfig c = fast();
    c.seed = 11;
    CHECK(train(f, t, c) == train(f, t, c));
  }
  TrainConfig a = fast(), b = fast();
  b.seed = 1;
  CHECK_FALSE(train_mlp(t, a).net == train_mlp(t, b).net);
}

TEST_CASE("full-batch loss never increases") {
  const FeatureTable t = gaussian_table(200, 4, 1.0, 2, 7);
  for (Family f : {Family::kLogReg, Family::kMlp, Family::kSiamese}) {
    TrainLog log;
    train(f, t, fast(), &log);
    REQUIRE(log.loss.size() > 1);
    for (std::size_t k = 1; k < log.loss.size(); ++k) {
      CHECK(log.loss[k] <= log.loss[k - 1]);
    }
  }
}

TEST_CASE("config and data contracts") {
  const FeatureTable t = gaussian_table(20, 2, 1.0, 1, 1);
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(train_logreg(t, c), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0;
  CHECK_THROWS_AS(train_logreg(t, c), ConfigError);

  const FeatureTable one_class = make_table({{1.0}, {2.0}}, {Label::kFactual, Label::kFactual});
  CHECK_THROWS_AS(train_logreg(one_class, fast()), TrainingError);
  const FeatureTable unlabeled = make_table({{1.0}, {2.0}}, {Label::kFactual, Label::kUnlabeled});
  CHECK_THROWS_AS(train_mlp(unlabeled, fast()), TrainingError);
  const FeatureTable tiny = make_table({{1.0}, {2.0}, {3.0}},
                                       {Label::kFactual, Label::kFactual, Label::kHallucinated});
  CHECK_THROWS_AS(train_siamese(tiny, fast()), TrainingError);

  TrainConfig fixed = fast();
  fixed.step_control = StepControl::kFixed;
  fixed.learning_rate = 1e4;
  CHECK_THROWS_AS(train_mlp(gaussian_table(100, 3, 1.0, 3, 2), fixed), DivergenceError);
}

TEST_CASE("null and shuffled labels give chance accuracy") {
  const FeatureTable train_t = gaussian_table(1000, 4, 0.0, 1, 21);
  const FeatureTable test_t = gaussian_table(1000, 4, 0.0, 1, 22);
  CHECK(std::abs(accuracy(train_logreg(train_t, fast()), test_t) - 0.5) <= 0.05);

  // Shuffled labels on a planted set; held-out half of the same shuffle.
  const FeatureTable shuffled = relabeled(gaussian_table(2000, 4, 3.0, 2, 23), 5);
  std::vector<std::size_t> fit_idx, test_idx;
  for (std::size_t i = 0; i < shuffled.rows(); ++i) (i < 1000 ? fit_idx : test_idx).push_back(i);
  CHECK(std::abs(accuracy(train_logreg(shuffled.subset(fit_idx), fast()),
                          shuffled.subset(test_idx)) - 0.5) <= 0.05);
}

TEST_CASE("planted Gaussian shift: logreg near the Bayes rate, siamese near logreg") {
  const double shift = 1.5;
  const FeatureTable tr = gaussian_table(2000, 4, shift, 4, 31);
  const FeatureTable te = gaussian_table(4000, 4, shift, 4, 32);
  const double bayes = oracle::bayes_accuracy(shift);
  const double lr = accuracy(train_logreg(tr, fast()), te);
  CHECK(std::abs(lr - bayes) <= 0.03);
  TrainConfig sc;
  sc.seed = 4;
  CHECK(std::abs(accuracy(train_siamese(tr, sc), te) - lr) <= 0.05);

  TrainConfig ens = fast();
  ens.ensemble_members = {MemberKind::kLogReg, MemberKind::kMlp};
  const auto e = train(Family::kEnsemble, tr, ens);
  const double best = std::max(accuracy(e.members[0], te), accuracy(e.members[1], te));
  CHECK(accuracy(e, te) >= best - 0.02);
}

TEST_CASE("siamese prototypes and pair loss") {
  // Two point-mass classes.
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  for (int i = 0; i < 10; ++i) {
    rows.push_back(i % 2 ? std::vector<double>{2.0, -1.0} : std::vector<double>{-1.0, 0.5});
    labels.push_back(i % 2 ? Label::kHallucinated : Label::kFactual);
  }
  const FeatureTable t = make_table(rows, labels);
  const DetectorModel m = train_siamese(t, fast());
  const auto eh = embed(m, rows[1]);
  const auto ef = embed(m, rows[0]);
  for (std::size_t j = 0; j < eh.size(); ++j) {
    CHECK(m.prototype_halu[j] == doctest::Approx(eh[j]).epsilon(1e-6));
    CHECK(m.prototype_factual[j] == doctest::Approx(ef[j]).epsilon(1e-6));
  }
  CHECK(accuracy(m, t) == 1.0);
  CHECK(predict(m, rows[1]) > 0.5);

  CHECK(pair_loss(eh, embed(m, rows[1]), true, 1.0) == 0.0);
  const double a[] = {0.0, 0.0}, b[] = {0.6, 0.8};
  CHECK(pair_loss(a, b, true, 1.0) == doctest::Approx(0.5));
  CHECK(pair_loss(a, b, false, 1.0) == 0.0);
  CHECK(pair_loss(a, b, false, 2.0) == doctest::Approx(0.5));
}

TEST_CASE("ensemble averaging") {
  const FeatureTable t = gaussian_table(100, 2, 2.0, 2, 8);
  const DetectorModel lr = train_logreg(t, fast());
  const DetectorModel same = train_ensemble({lr, lr, lr}, t, false);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    CHECK(predict(same, t.row(i)) == doctest::Approx(predict(lr, t.row(i))).epsilon(1e-12));
  }

  // Constant members: zero weights, bias logit(p).
  auto constant = [&](double p) {
    DetectorModel m = lr;
    std::fill(m.net.params.begin(), m.net.params.end(), 0.0);
    m.net.params.back() = std::log(p / (1 - p));
    return m;
  };
  const DetectorModel avg = train_ensemble({constant(0.2), constant(0.8)}, t, true);
  CHECK(predict(avg, t.row(0)) == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(train_ensemble({lr}, t, false), ConfigError);
  const FeatureTable other = gaussian_table(100, 3, 2.0, 2, 8);
  CHECK_THROWS_AS(train_ensemble({lr, train_logreg(other, fast())}, t, false), LayoutError);
}

TEST_CASE("prediction contracts") {
  const FeatureTable t = gaussian_table(100, 3, 2.0, 3, 9);
  DetectorModel lr = train_logreg(t, fast());
  DetectorModel zero = lr;
  std::fill(zero.net.params.begin(), zero.net.params.end(), 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 20; ++k) {
    const double x[] = {10 * n01(rng), n01(rng), -n01(rng)};
    CHECK(predict(zero, x) == 0.5);
  }
  const auto batch = predict(lr, t);
  for (std::size_t i = 0; i < t.rows(); ++i) CHECK(batch[i] == predict(lr, t.row(i)));

  const double short_x[] = {1.0};
  CHECK_THROWS_AS(predict(lr, short_x), LayoutError);
  const double nan_x[] = {1.0, NAN, 0.0};
  CHECK_THROWS_AS(predict(lr, nan_x), ValidationError);
  CHECK_THROWS_AS(predict(lr, gaussian_table(10, 2, 1.0, 1, 1)), LayoutError);
}

TEST_CASE("rescaled columns give the same predictions") {
  const FeatureTable t = gaussian_table(300, 2, 2.0, 2, 10);
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    rows.push_back({t.row(i)[0] * 1000.0 + 7.0, t.row(i)[1] * 0.01 - 3.0});
    labels.push_back(t.unit(i).label);
  }
  const FeatureTable scaled = make_table(rows, labels);
  const auto a = predict(train_logreg(t, fast()), t);
  const auto b = predict(train_logreg(scaled, fast()), scaled);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6);
}

TEST_CASE("analytic gradients match central differences") {
  const FeatureTable s = gaussian_table(24, 5, 1.0, 2, 12);
  TrainConfig c;
  c.mlp_hidden = {8, 6};
  c.embedding_dim = 4;
  c.seed = 3;
  CHECK(grad_check(Family::kLogReg, s, c) < 1e-5);
  CHECK(grad_check(Family::kMlp, s, c) < 1e-4);
  CHECK(grad_check(Family::kSiamese, s, c) < 1e-4);
  CHECK_THROWS_AS(grad_check(Family::kEnsemble, s, c), ConfigError);
  CHECK_THROWS_AS(grad_check(Family::kLogReg, gaussian_table(40, 2, 1.0, 1, 1), c), ConfigError);
}

TEST_CASE("model save/load round trip") {
  const FeatureTable t = gaussian_table(200, 3, 1.5, 3, 13);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  std::vector<std::vector<double>> probes(100, std::vector<double>(3));
  for (auto& v : probes) {
    for (auto& x : v) x = 2 * n01(rng);
  }
  for (Family f : {Family::kLogReg, Family::kMlp, Family::kSiamese, Family::kEnsemble}) {
    const DetectorModel m = train(f, t, fast());
    const auto dir = temp_dir("model");
    save_model(m, dir);
    const DetectorModel back = load_model(dir, f);
    CHECK(back == m);
    for (const auto& v : probes) {
      const double a = predict(m, v), b = predict(back, v);
      CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    }
    const auto dir2 = temp_dir("model2");
    save_model(back, dir2);
    CHECK(slurp(dir / "model.json") == slurp(dir2 / "model.json"));
    CHECK(slurp(dir / "params.bin") == slurp(dir2 / "params.bin"));
    const Family wrong = f == Family::kLogReg ? Family::kMlp : Family::kLogReg;
    CHECK_THROWS_AS(load_model(dir, wrong), ModelFormatError);
  }
}

TEST_CASE("model corruption mutants") {
  const auto dir = temp_dir("model_clean");
  save_model(train_mlp(gaussian_table(50, 2, 1.0, 1, 14), fast()), dir);
  for (const auto& m : model_mutants()) {
    const auto cls = load_error_class(dir, m, [](const std::filesystem::path& p) { load_model(p); });
    CHECK_MESSAGE(cls == m.expected_error, m.name);
  }
}
