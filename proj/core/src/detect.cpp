#include "haluprobe/detect.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <json.hpp>

#include "binary_io.h"
#include "haluprobe/errors.h"

namespace haluprobe::detect {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void round_to_f32(std::vector<double>& v) {
  for (double& x : v) x = static_cast<float>(x);
}

double round_to_f32(double v) { return static_cast<float>(v); }

}  // namespace

std::string_view family_name(Family family) {
  switch (family) {
    case Family::kLogReg:
      return "logreg";
    case Family::kMlp:
      return "mlp";
    case Family::kSiamese:
      return "siamese";
    case Family::kEnsemble:
      return "ensemble";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  for (Family f : {Family::kLogReg, Family::kMlp, Family::kSiamese,
                   Family::kEnsemble}) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown family '" + std::string(name) +
                    "' (expected logreg|mlp|siamese|ensemble)");
}

// --- standardizer ------------------------------------------------------------

Standardizer fit_standardizer(const FeatureTable& table) {
  if (table.rows() == 0) throw TrainingError("cannot standardize an empty table");
  const std::size_t n = table.rows();
  const std::size_t d = table.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  s.degenerate.assign(d, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = table.row(i);
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = table.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - s.mean[j];
      s.stddev[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(s.stddev[j] / static_cast<double>(n));
    if (sd <= 1e-9 * std::max(1.0, std::abs(s.mean[j]))) {
      s.stddev[j] = 1.0;
      s.degenerate[j] = 1;
    } else {
      s.stddev[j] = sd;
    }
  }
  return s;
}

std::vector<double> apply_standardizer(const Standardizer& s,
                                       std::span<const double> x) {
  if (x.size() != s.dims()) {
    throw LayoutError("vector width " + std::to_string(x.size()) +
                      " does not match standardizer width " +
                      std::to_string(s.dims()));
  }
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    z[j] = s.degenerate[j] ? 0.0 : (x[j] - s.mean[j]) / s.stddev[j];
  }
  return z;
}

// --- network -------------------------------------------------------------------

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (std::size_t k = 1; k < widths.size(); ++k) {
    n += static_cast<std::size_t>(widths[k]) * (widths[k - 1] + 1);
  }
  return n;
}

Network make_network(std::vector<int> widths) {
  if (widths.size() < 2) throw ConfigError("network needs at least two widths");
  for (int w : widths) {
    if (w < 1) throw ConfigError("layer widths must be >= 1");
  }
  Network net;
  net.widths = std::move(widths);
  net.params.assign(net.param_count(), 0.0);
  return net;
}

void init_glorot(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t off = 0;
  for (std::size_t k = 1; k < net.widths.size(); ++k) {
    const int in = net.widths[k - 1];
    const int out = net.widths[k];
    const double a = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-a, a);
    for (int i = 0; i < in * out; ++i) net.params[off++] = u(rng);
    for (int i = 0; i < out; ++i) net.params[off++] = 0.0;
  }
}

namespace {

struct LayerView {
  std::size_t w_off;
  std::size_t b_off;
  int in;
  int out;
};

std::vector<LayerView> layer_views(const std::vector<int>& widths) {
  std::vector<LayerView> v;
  std::size_t off = 0;
  for (std::size_t k = 1; k < widths.size(); ++k) {
    const int in = widths[k - 1];
    const int out = widths[k];
    v.push_back({off, off + static_cast<std::size_t>(in) * out, in, out});
    off += static_cast<std::size_t>(in + 1) * out;
  }
  return v;
}

struct ForwardCache {
  std::vector<Mat> a;  // a[0] = input, a[k] = activation of layer k
  std::vector<Mat> z;  // pre-activations
};

// X is n x in. Returns n x out.
Mat forward(const std::vector<int>& widths, const std::vector<double>& p,
            const Mat& X, ForwardCache* cache) {
  const auto views = layer_views(widths);
  Mat a = X;
  if (cache) {
    cache->a.clear();
    cache->z.clear();
    cache->a.push_back(X);
  }
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto& v = views[k];
    Eigen::Map<const RowMat> W(p.data() + v.w_off, v.out, v.in);
    Eigen::Map<const Vec> b(p.data() + v.b_off, v.out);
    Mat z = a * W.transpose();
    z.rowwise() += b.transpose();
    const bool last = k + 1 == views.size();
    a = last ? z : Mat(z.cwiseMax(0.0));
    if (cache) {
      cache->z.push_back(std::move(z));
      cache->a.push_back(a);
    }
  }
  return a;
}

// dout: n x out gradient of the loss w.r.t. the network output.
void backward(const std::vector<int>& widths, const std::vector<double>& p,
              const ForwardCache& cache, Mat dout, std::vector<double>& grad) {
  const auto views = layer_views(widths);
  grad.assign(p.size(), 0.0);
  Mat dz = std::move(dout);
  for (std::size_t kk = views.size(); kk-- > 0;) {
    const auto& v = views[kk];
    Eigen::Map<RowMat> dW(grad.data() + v.w_off, v.out, v.in);
    Eigen::Map<Vec> db(grad.data() + v.b_off, v.out);
    dW = dz.transpose() * cache.a[kk];
    db = dz.colwise().sum().transpose();
    if (kk == 0) break;
    Eigen::Map<const RowMat> W(p.data() + v.w_off, v.out, v.in);
    Mat da = dz * W;
    dz = da.cwiseProduct(
        (cache.z[kk - 1].array() > 0.0).cast<double>().matrix());
  }
}

double l2_term(const std::vector<int>& widths, const std::vector<double>& p,
               double l2, std::vector<double>* grad) {
  if (l2 == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& v : layer_views(widths)) {
    const std::size_t n = static_cast<std::size_t>(v.in) * v.out;
    for (std::size_t i = v.w_off; i < v.w_off + n; ++i) {
      s += p[i] * p[i];
      if (grad) (*grad)[i] += l2 * p[i];
    }
  }
  return 0.5 * l2 * s;
}

// Standardized training data.
struct Data {
  Mat X;
  Vec y;  // 1 = hallucinated
  Vec w;  // per-row loss weight
};

void check_labels(const FeatureTable& table, std::size_t& n_halu,
                  std::size_t& n_fact) {
  n_halu = n_fact = 0;
  for (const auto& u : table.units()) {
    if (u.label == Label::kHallucinated) {
      ++n_halu;
    } else if (u.label == Label::kFactual) {
      ++n_fact;
    } else {
      throw TrainingError("training table holds unlabeled unit of trace '" +
                          u.trace_id + "'");
    }
  }
  if (n_halu == 0 || n_fact == 0) {
    throw TrainingError("training table needs both classes (hallucinated=" +
                        std::to_string(n_halu) +
                        ", factual=" + std::to_string(n_fact) + ")");
  }
}

Data make_data(const FeatureTable& table, const Standardizer& s,
               bool class_weighting) {
  std::size_t n_halu = 0, n_fact = 0;
  check_labels(table, n_halu, n_fact);
  const std::size_t n = table.rows();
  Data d;
  d.X.resize(n, table.cols());
  d.y.resize(n);
  d.w.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = apply_standardizer(s, table.row(i));
    for (std::size_t j = 0; j < z.size(); ++j) d.X(i, j) = z[j];
    const bool h = table.unit(i).label == Label::kHallucinated;
    d.y(i) = h ? 1.0 : 0.0;
    if (class_weighting) {
      d.w(i) = static_cast<double>(n) / (2.0 * (h ? n_halu : n_fact));
    } else {
      d.w(i) = 1.0;
    }
  }
  return d;
}

// Objective over a subset of examples (rows or pairs). An empty batch means
// every example.
using Batch = std::span<const int>;

struct ClassifierObjective {
  const std::vector<int>& widths;
  const Data& data;
  double l2;

  int examples() const { return static_cast<int>(data.X.rows()); }

  double operator()(const std::vector<double>& p, std::vector<double>* grad,
                    Batch batch = {}) const {
    Mat X;
    Vec y, w;
    const Mat* Xp = &data.X;
    const Vec* yp = &data.y;
    const Vec* wp = &data.w;
    if (!batch.empty()) {
      std::vector<int> idx(batch.begin(), batch.end());
      X = data.X(idx, Eigen::all);
      y = data.y(idx);
      w = data.w(idx);
      Xp = &X;
      yp = &y;
      wp = &w;
    }
    ForwardCache cache;
    const Mat out = forward(widths, p, *Xp, grad ? &cache : nullptr);
    const double wsum = wp->sum();
    double loss = 0.0;
    Mat dout(out.rows(), 1);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double z = out(i, 0);
      loss += (*wp)(i) * (softplus(z) - (*yp)(i) * z);
      dout(i, 0) = (*wp)(i) * (sigmoid(z) - (*yp)(i)) / wsum;
    }
    loss /= wsum;
    if (grad) backward(widths, p, cache, std::move(dout), *grad);
    loss += l2_term(widths, p, l2, grad);
    return loss;
  }
};

struct Pair {
  int i;
  int j;
  bool same;
};

double pair_loss_at(double dist, bool same, double margin) {
  if (same) return 0.5 * dist * dist;
  const double gap = std::max(margin - dist, 0.0);
  return 0.5 * gap * gap;
}

struct ContrastiveObjective {
  const std::vector<int>& widths;
  const Data& data;
  const std::vector<Pair>& pairs;
  double margin;
  double l2;

  int examples() const { return static_cast<int>(pairs.size()); }

  double operator()(const std::vector<double>& p, std::vector<double>* grad,
                    Batch batch = {}) const {
    ForwardCache cache;
    const Mat E = forward(widths, p, data.X, grad ? &cache : nullptr);
    Mat dE;
    if (grad) dE = Mat::Zero(E.rows(), E.cols());
    const int count = batch.empty() ? examples() : static_cast<int>(batch.size());
    double loss = 0.0;
    for (int k = 0; k < count; ++k) {
      const Pair& pr = pairs[batch.empty() ? k : batch[k]];
      const Eigen::RowVectorXd diff = E.row(pr.i) - E.row(pr.j);
      const double dist = diff.norm();
      loss += pair_loss_at(dist, pr.same, margin);
      if (pr.same) {
        if (grad) {
          dE.row(pr.i) += diff / count;
          dE.row(pr.j) -= diff / count;
        }
      } else if (dist < margin) {
        const double gap = margin - dist;
        if (grad && dist > 0.0) {
          const Eigen::RowVectorXd g = -(gap / dist) * diff / count;
          dE.row(pr.i) += g;
          dE.row(pr.j) -= g;
        }
      }
    }
    loss /= count;
    if (grad) backward(widths, p, cache, std::move(dE), *grad);
    loss += l2_term(widths, p, l2, grad);
    return loss;
  }
};

template <typename Objective>
void descend(std::vector<double>& params, const Objective& obj,
             const TrainConfig& config, TrainLog* log) {
  std::vector<double> grad, cand, cand_grad;
  double loss = obj(params, &grad);
  if (!std::isfinite(loss)) throw DivergenceError(0, "initial loss is not finite");
  if (log) log->loss.push_back(loss);

  if (config.batch_size > 0) {
    std::mt19937_64 rng(splitmix64(config.seed ^ 0xba7c4ULL));
    std::vector<int> order(obj.examples());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size();
           start += config.batch_size) {
        const std::size_t len =
            std::min<std::size_t>(config.batch_size, order.size() - start);
        obj(params, &grad, Batch(order.data() + start, len));
        for (std::size_t k = 0; k < params.size(); ++k) {
          params[k] -= config.learning_rate * grad[k];
        }
      }
      loss = obj(params, nullptr);
      if (!std::isfinite(loss)) {
        throw DivergenceError(epoch, "loss is not finite");
      }
      if (log) log->loss.push_back(loss);
    }
    return;
  }

  double lr = config.learning_rate;
  const double lr_floor = config.learning_rate * 1e-12;
  const double lr_cap = config.learning_rate * 1e3;
  cand.resize(params.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    bool accepted = false;
    while (!accepted) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        cand[k] = params[k] - lr * grad[k];
      }
      const double cand_loss = obj(cand, &cand_grad);
      if (config.step_control == StepControl::kFixed) {
        if (!std::isfinite(cand_loss)) {
          throw DivergenceError(epoch, "loss is not finite");
        }
        if (cand_loss > loss) {
          throw DivergenceError(epoch, "loss increased from " +
                                           std::to_string(loss) + " to " +
                                           std::to_string(cand_loss));
        }
        accepted = true;
      } else if (std::isfinite(cand_loss) && cand_loss <= loss) {
        accepted = true;
        lr = std::min(lr * 1.2, lr_cap);
      } else {
        lr *= 0.5;
        if (log) ++log->rejected_steps;
        // No descent step exists at this resolution: converged.
        if (lr < lr_floor) return;
        continue;
      }
      params.swap(cand);
      grad.swap(cand_grad);
      loss = cand_loss;
      if (log) log->loss.push_back(loss);
    }
  }
}

void record_rows(const FeatureTable& table, TrainLog* log) {
  if (!log) return;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    log->fitted_rows.push_back(row_hash(table, i));
  }
}

std::vector<int> classifier_widths(int inputs, const std::vector<int>& hidden) {
  std::vector<int> w{inputs};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(1);
  return w;
}

std::vector<int> encoder_widths(int inputs, const TrainConfig& c) {
  std::vector<int> w{inputs};
  w.insert(w.end(), c.mlp_hidden.begin(), c.mlp_hidden.end());
  w.push_back(c.embedding_dim);
  return w;
}

std::vector<Pair> sample_pairs(const Data& data, int count,
                               std::uint64_t seed) {
  std::vector<int> halu, fact;
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    (data.y(i) > 0.5 ? halu : fact).push_back(static_cast<int>(i));
  }
  if (halu.size() < 2 || fact.size() < 2) {
    throw TrainingError("siamese training needs at least two rows per class");
  }
  std::mt19937_64 rng(seed);
  auto pick = [&rng](const std::vector<int>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  auto pick_two = [&](const std::vector<int>& v) {
    const int a = pick(v);
    int b = a;
    while (b == a) b = pick(v);
    return std::pair{a, b};
  };
  std::vector<Pair> pairs;
  pairs.reserve(count);
  for (int k = 0; k < count; ++k) {
    switch (k % 4) {
      case 0: {
        auto [a, b] = pick_two(halu);
        pairs.push_back({a, b, true});
        break;
      }
      case 1: {
        auto [a, b] = pick_two(fact);
        pairs.push_back({a, b, true});
        break;
      }
      default:
        pairs.push_back({pick(halu), pick(fact), false});
        break;
    }
  }
  return pairs;
}

void check_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw ValidationError("<input>", "input_finite",
                            "feature vector holds a non-finite value");
    }
  }
}

Mat as_row(std::span<const double> z) {
  Mat m(1, z.size());
  for (std::size_t j = 0; j < z.size(); ++j) m(0, j) = z[j];
  return m;
}

double siamese_gap(const DetectorModel& m, const Mat& embedding) {
  const Eigen::Map<const Eigen::RowVectorXd> pf(m.prototype_factual.data(),
                                               m.prototype_factual.size());
  const Eigen::Map<const Eigen::RowVectorXd> ph(m.prototype_halu.data(),
                                               m.prototype_halu.size());
  return (embedding.row(0) - pf).norm() - (embedding.row(0) - ph).norm();
}

// Inverse temperature minimizing weighted log loss of sigmoid(beta * gap).
double fit_inverse_temperature(const std::vector<double>& gap, const Vec& y,
                               const Vec& w) {
  auto loss = [&](double log_beta) {
    const double beta = std::exp(log_beta);
    double s = 0.0;
    for (std::size_t i = 0; i < gap.size(); ++i) {
      const double z = beta * gap[i];
      s += w(i) * (softplus(z) - y(i) * z);
    }
    return s;
  };
  // Golden-section search on log(beta); the loss is convex in beta.
  double lo = -10.0, hi = 10.0;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
  double fa = loss(a), fb = loss(b);
  for (int it = 0; it < 100; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - r * (hi - lo);
      fa = loss(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + r * (hi - lo);
      fb = loss(b);
    }
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace

void validate_config(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(c.l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (c.batch_size < 0) throw ConfigError("batch_size must be >= 0");
  for (int w : c.mlp_hidden) {
    if (w < 1) throw ConfigError("mlp_hidden widths must be >= 1");
  }
  if (c.embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (!(c.margin > 0.0)) throw ConfigError("margin must be > 0");
  if (c.siamese_pairs < 1) throw ConfigError("siamese_pairs must be >= 1");
  if (c.ensemble_members.size() < 2) {
    throw ConfigError("an ensemble needs at least two members");
  }
}

DetectorModel train_logreg(const FeatureTable& table, const TrainConfig& config,
                           TrainLog* log) {
  validate_config(config);
  DetectorModel m;
  m.family = Family::kLogReg;
  m.layout = table.layout();
  m.seed = config.seed;
  m.standardizer = fit_standardizer(table);
  const Data data = make_data(table, m.standardizer, config.class_weighting);
  m.net = make_network({static_cast<int>(table.cols()), 1});
  const ClassifierObjective obj{m.net.widths, data, config.l2};
  descend(m.net.params, obj, config, log);
  round_to_f32(m.net.params);
  record_rows(table, log);
  return m;
}

DetectorModel train_mlp(const FeatureTable& table, const TrainConfig& config,
                        TrainLog* log) {
  validate_config(config);
  DetectorModel m;
  m.family = Family::kMlp;
  m.layout = table.layout();
  m.seed = config.seed;
  m.standardizer = fit_standardizer(table);
  const Data data = make_data(table, m.standardizer, config.class_weighting);
  m.net = make_network(
      classifier_widths(static_cast<int>(table.cols()), config.mlp_hidden));
  init_glorot(m.net, config.seed);
  const ClassifierObjective obj{m.net.widths, data, config.l2};
  descend(m.net.params, obj, config, log);
  round_to_f32(m.net.params);
  record_rows(table, log);
  return m;
}

DetectorModel train_siamese(const FeatureTable& table,
                            const TrainConfig& config, TrainLog* log) {
  validate_config(config);
  DetectorModel m;
  m.family = Family::kSiamese;
  m.layout = table.layout();
  m.seed = config.seed;
  m.margin = config.margin;
  m.standardizer = fit_standardizer(table);
  const Data data = make_data(table, m.standardizer, config.class_weighting);
  const auto pairs =
      sample_pairs(data, config.siamese_pairs, splitmix64(config.seed ^ 0x9a125ULL));
  m.net = make_network(encoder_widths(static_cast<int>(table.cols()), config));
  init_glorot(m.net, config.seed);
  const ContrastiveObjective obj{m.net.widths, data, pairs, config.margin,
                                 config.l2};
  descend(m.net.params, obj, config, log);
  round_to_f32(m.net.params);

  const Mat E = forward(m.net.widths, m.net.params, data.X, nullptr);
  Eigen::RowVectorXd sum_h = Eigen::RowVectorXd::Zero(E.cols());
  Eigen::RowVectorXd sum_f = Eigen::RowVectorXd::Zero(E.cols());
  double n_h = 0.0, n_f = 0.0;
  for (Eigen::Index i = 0; i < E.rows(); ++i) {
    if (data.y(i) > 0.5) {
      sum_h += E.row(i);
      n_h += 1.0;
    } else {
      sum_f += E.row(i);
      n_f += 1.0;
    }
  }
  m.prototype_halu.resize(E.cols());
  m.prototype_factual.resize(E.cols());
  for (Eigen::Index j = 0; j < E.cols(); ++j) {
    m.prototype_halu[j] = sum_h(j) / n_h;
    m.prototype_factual[j] = sum_f(j) / n_f;
  }
  round_to_f32(m.prototype_halu);
  round_to_f32(m.prototype_factual);

  std::vector<double> gap(E.rows());
  for (Eigen::Index i = 0; i < E.rows(); ++i) {
    gap[i] = siamese_gap(m, E.row(i));
  }
  const double beta = fit_inverse_temperature(gap, data.y, data.w);
  m.temperature = round_to_f32(1.0 / beta);
  record_rows(table, log);
  return m;
}

DetectorModel train_ensemble(std::vector<DetectorModel> members,
                             const FeatureTable& table, bool uniform_weights,
                             TrainLog* log) {
  if (members.size() < 2) {
    throw ConfigError("an ensemble needs at least two members");
  }
  for (const auto& mem : members) {
    if (mem.layout != table.layout()) {
      throw LayoutError("ensemble member layout differs from the table layout");
    }
  }
  std::size_t n_halu = 0, n_fact = 0;
  check_labels(table, n_halu, n_fact);
  DetectorModel m;
  m.family = Family::kEnsemble;
  m.layout = table.layout();
  m.seed = members.front().seed;
  std::vector<double> w(members.size(), 1.0);
  if (!uniform_weights) {
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto probs = predict(members[k], table);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool h = probs[i] >= 0.5;
        correct += h == (table.unit(i).label == Label::kHallucinated);
      }
      w[k] = static_cast<double>(correct) / static_cast<double>(probs.size());
    }
  }
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0.0) {
    std::fill(w.begin(), w.end(), 1.0);
    total = static_cast<double>(w.size());
  }
  for (double& x : w) x /= total;
  m.weights = std::move(w);
  m.members = std::move(members);
  record_rows(table, log);
  return m;
}

DetectorModel train(Family family, const FeatureTable& table,
                    const TrainConfig& config, TrainLog* log) {
  switch (family) {
    case Family::kLogReg:
      return train_logreg(table, config, log);
    case Family::kMlp:
      return train_mlp(table, config, log);
    case Family::kSiamese:
      return train_siamese(table, config, log);
    case Family::kEnsemble:
      break;
  }
  validate_config(config);
  std::size_t n_halu = 0, n_fact = 0;
  check_labels(table, n_halu, n_fact);
  std::vector<DetectorModel> members;
  for (std::size_t k = 0; k < config.ensemble_members.size(); ++k) {
    TrainConfig mc = config;
    mc.seed = splitmix64(config.seed + k + 1);
    FeatureTable sample = table;
    if (config.ensemble_bootstrap) {
      std::mt19937_64 rng(splitmix64(mc.seed ^ 0xb007ULL));
      std::uniform_int_distribution<std::size_t> pick(0, table.rows() - 1);
      // Redraw until both classes appear; tiny tables may need a few tries.
      for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<std::size_t> idx(table.rows());
        for (auto& i : idx) i = pick(rng);
        FeatureTable s = table.subset(idx);
        bool h = false, f = false;
        for (const auto& u : s.units()) {
          (u.label == Label::kHallucinated ? h : f) = true;
        }
        if (h && f) {
          sample = std::move(s);
          break;
        }
      }
    }
    TrainLog member_log;
    const MemberKind kind = config.ensemble_members[k];
    members.push_back(kind == MemberKind::kMlp
                          ? train_mlp(sample, mc, log ? &member_log : nullptr)
                          : train_logreg(sample, mc, log ? &member_log : nullptr));
    if (log) {
      log->fitted_rows.insert(log->fitted_rows.end(),
                              member_log.fitted_rows.begin(),
                              member_log.fitted_rows.end());
    }
  }
  auto m = train_ensemble(std::move(members), table,
                          config.ensemble_uniform_weights, log);
  m.seed = config.seed;
  return m;
}

double predict(const DetectorModel& model, std::span<const double> x) {
  if (x.size() != model.layout.size()) {
    throw LayoutError("vector width " + std::to_string(x.size()) +
                      " does not match model width " +
                      std::to_string(model.layout.size()));
  }
  check_finite(x);
  switch (model.family) {
    case Family::kEnsemble: {
      double p = 0.0;
      for (std::size_t k = 0; k < model.members.size(); ++k) {
        p += model.weights[k] * predict(model.members[k], x);
      }
      return std::clamp(p, 0.0, 1.0);
    }
    case Family::kLogReg:
    case Family::kMlp: {
      const Mat z = as_row(apply_standardizer(model.standardizer, x));
      const Mat out = forward(model.net.widths, model.net.params, z, nullptr);
      return sigmoid(out(0, 0));
    }
    case Family::kSiamese: {
      const Mat z = as_row(apply_standardizer(model.standardizer, x));
      const Mat e = forward(model.net.widths, model.net.params, z, nullptr);
      return sigmoid(siamese_gap(model, e) / model.temperature);
    }
  }
  return 0.5;
}

std::vector<double> embed(const DetectorModel& model, std::span<const double> x) {
  if (model.family != Family::kSiamese) {
    throw ConfigError("embed needs a siamese model");
  }
  if (x.size() != model.layout.size()) {
    throw LayoutError("vector width " + std::to_string(x.size()) +
                      " does not match model width " +
                      std::to_string(model.layout.size()));
  }
  check_finite(x);
  const Mat z = as_row(apply_standardizer(model.standardizer, x));
  const Mat e = forward(model.net.widths, model.net.params, z, nullptr);
  return std::vector<double>(e.data(), e.data() + e.size());
}

double pair_loss(std::span<const double> a, std::span<const double> b,
                 bool same_label, double margin) {
  if (a.size() != b.size()) throw LayoutError("embedding widths differ");
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sq += (a[j] - b[j]) * (a[j] - b[j]);
  return pair_loss_at(std::sqrt(sq), same_label, margin);
}

std::vector<double> predict(const DetectorModel& model,
                            const FeatureTable& table) {
  if (table.layout() != model.layout) {
    throw LayoutError("table layout does not match the model layout");
  }
  std::vector<double> out(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out[i] = predict(model, table.row(i));
  }
  return out;
}

double grad_check(Family family, const FeatureTable& sample,
                  const TrainConfig& config) {
  validate_config(config);
  if (sample.rows() == 0 || sample.rows() > 32) {
    throw ConfigError("grad_check needs between 1 and 32 rows");
  }
  const Standardizer s = fit_standardizer(sample);
  const int d = static_cast<int>(sample.cols());
  Data data;
  data.X.resize(sample.rows(), d);
  data.y.resize(sample.rows());
  data.w = Vec::Ones(sample.rows());
  for (std::size_t i = 0; i < sample.rows(); ++i) {
    const auto z = apply_standardizer(s, sample.row(i));
    for (int j = 0; j < d; ++j) data.X(i, j) = z[j];
    data.y(i) = sample.unit(i).label == Label::kHallucinated ? 1.0 : 0.0;
  }

  Network net;
  std::vector<Pair> pairs;
  switch (family) {
    case Family::kLogReg:
      net = make_network({d, 1});
      break;
    case Family::kMlp:
      net = make_network(classifier_widths(d, config.mlp_hidden));
      break;
    case Family::kSiamese:
      net = make_network(encoder_widths(d, config));
      for (int i = 0; i < data.X.rows(); ++i) {
        for (int j = i + 1; j < data.X.rows(); ++j) {
          pairs.push_back({i, j, data.y(i) == data.y(j)});
        }
      }
      if (pairs.empty()) throw ConfigError("siamese grad_check needs two rows");
      break;
    case Family::kEnsemble:
      throw ConfigError("grad_check does not apply to ensembles");
  }
  init_glorot(net, config.seed);
  // Small random biases so the check also exercises bias gradients away
  // from the all-zero point.
  {
    std::mt19937_64 rng(splitmix64(config.seed ^ 0x61a5ULL));
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (const auto& v : layer_views(net.widths)) {
      for (int k = 0; k < v.out; ++k) net.params[v.b_off + k] = u(rng);
    }
  }

  auto loss = [&](const std::vector<double>& p, std::vector<double>* g) {
    if (family == Family::kSiamese) {
      return ContrastiveObjective{net.widths, data, pairs, config.margin,
                                  config.l2}(p, g);
    }
    return ClassifierObjective{net.widths, data, config.l2}(p, g);
  };

  std::vector<double> analytic;
  loss(net.params, &analytic);
  constexpr double h = 1e-4;
  constexpr double kNoiseFloor = 1e-7;
  double worst = 0.0;
  std::vector<double> p = net.params;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double up = loss(p, nullptr);
    p[k] = orig - h;
    const double down = loss(p, nullptr);
    p[k] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(numeric), std::abs(analytic[k]));
    if (scale < kNoiseFloor) continue;
    worst = std::max(worst, std::abs(numeric - analytic[k]) / scale);
  }
  return worst;
}

// --- serialization ---------------------------------------------------------------

namespace {

ordered_json blob_ref(std::vector<float>& blob, const std::vector<double>& v) {
  ordered_json j;
  j["offset"] = blob.size();
  j["length"] = v.size();
  blob.insert(blob.end(), v.begin(), v.end());
  return j;
}

ordered_json layout_json(const FeatureLayout& layout) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : layout) {
    arr.push_back({{"feature", std::string(feature_name(e.feature))},
                   {"layer", e.layer},
                   {"head", e.head},
                   {"dim", e.dim}});
  }
  return arr;
}

ordered_json model_json(const DetectorModel& m, std::vector<float>& blob) {
  ordered_json j;
  j["family"] = std::string(family_name(m.family));
  j["seed"] = m.seed;
  j["layout"] = layout_json(m.layout);
  if (m.family == Family::kEnsemble) {
    j["weights"] = m.weights;
    ordered_json members = ordered_json::array();
    for (const auto& mem : m.members) members.push_back(model_json(mem, blob));
    j["members"] = members;
    return j;
  }
  j["standardizer"] = {{"mean", m.standardizer.mean},
                       {"stddev", m.standardizer.stddev},
                       {"degenerate", m.standardizer.degenerate}};
  j["network"] = {{"widths", m.net.widths},
                  {"params", blob_ref(blob, m.net.params)}};
  if (m.family == Family::kSiamese) {
    j["siamese"] = {{"margin", m.margin},
                    {"prototype_factual", blob_ref(blob, m.prototype_factual)},
                    {"prototype_halu", blob_ref(blob, m.prototype_halu)},
                    {"temperature", blob_ref(blob, {m.temperature})}};
  }
  return j;
}

std::vector<double> read_ref(const ordered_json& ref,
                             const std::vector<float>& blob,
                             std::size_t expected) {
  const auto off = ref.at("offset").get<std::size_t>();
  const auto len = ref.at("length").get<std::size_t>();
  if (len != expected) {
    throw ModelFormatError("parameter block has " + std::to_string(len) +
                           " values, expected " + std::to_string(expected));
  }
  if (off > blob.size() || len > blob.size() - off) {
    throw ModelFormatError("parameter block [" + std::to_string(off) + ", " +
                           std::to_string(off + len) +
                           ") exceeds params.bin (" +
                           std::to_string(blob.size()) + " values)");
  }
  return {blob.begin() + off, blob.begin() + off + len};
}

DetectorModel model_from_json(const ordered_json& j,
                              const std::vector<float>& blob,
                              std::size_t& used) {
  DetectorModel m;
  m.family = parse_family(j.at("family").get<std::string>());
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("layout")) {
    m.layout.push_back({parse_feature(e.at("feature").get<std::string>()),
                        e.at("layer").get<int>(), e.at("head").get<int>(),
                        e.at("dim").get<int>()});
  }
  const std::size_t d = m.layout.size();
  if (m.family == Family::kEnsemble) {
    m.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& mj : j.at("members")) {
      m.members.push_back(model_from_json(mj, blob, used));
      if (m.members.back().layout != m.layout) {
        throw ModelFormatError("ensemble member layout differs");
      }
    }
    if (m.members.size() != m.weights.size() || m.members.size() < 2) {
      throw ModelFormatError("ensemble members and weights disagree");
    }
    return m;
  }
  const auto& sj = j.at("standardizer");
  m.standardizer.mean = sj.at("mean").get<std::vector<double>>();
  m.standardizer.stddev = sj.at("stddev").get<std::vector<double>>();
  m.standardizer.degenerate = sj.at("degenerate").get<std::vector<std::uint8_t>>();
  if (m.standardizer.mean.size() != d || m.standardizer.stddev.size() != d ||
      m.standardizer.degenerate.size() != d) {
    throw ModelFormatError("standardizer width does not match the layout");
  }
  for (double sd : m.standardizer.stddev) {
    if (!(sd > 0.0)) throw ModelFormatError("standardizer stddev must be > 0");
  }
  const auto& nj = j.at("network");
  try {
    m.net = make_network(nj.at("widths").get<std::vector<int>>());
  } catch (const ConfigError& e) {
    throw ModelFormatError(e.what());
  }
  if (static_cast<std::size_t>(m.net.inputs()) != d) {
    throw ModelFormatError("network input width does not match the layout");
  }
  const bool siamese = m.family == Family::kSiamese;
  if (!siamese && m.net.outputs() != 1) {
    throw ModelFormatError("classifier network must have one output");
  }
  m.net.params = read_ref(nj.at("params"), blob, m.net.param_count());
  used += m.net.params.size();
  if (siamese) {
    const auto& s = j.at("siamese");
    const auto e = static_cast<std::size_t>(m.net.outputs());
    m.margin = s.at("margin").get<double>();
    m.prototype_factual = read_ref(s.at("prototype_factual"), blob, e);
    m.prototype_halu = read_ref(s.at("prototype_halu"), blob, e);
    m.temperature = read_ref(s.at("temperature"), blob, 1)[0];
    used += 2 * e + 1;
    if (!(m.temperature > 0.0)) throw ModelFormatError("temperature must be > 0");
  }
  return m;
}

}  // namespace

void save_model(const DetectorModel& model, const fs::path& dir) {
  detail::ensure_dir(dir);
  std::vector<float> blob;
  ordered_json j;
  j["format"] = "haluprobe-model";
  j["format_version"] = kModelFormatVersion;
  j["model"] = model_json(model, blob);
  j["params_floats"] = blob.size();
  std::vector<char> bytes;
  detail::append_f32(bytes, blob);
  detail::write_file(dir / "params.bin", bytes);
  detail::write_text(dir / "model.json", j.dump(2) + "\n");
}

DetectorModel load_model(const fs::path& dir) {
  const fs::path json_path = dir / "model.json";
  const fs::path bin_path = dir / "params.bin";
  std::vector<char> text;
  std::vector<char> bytes;
  try {
    text = detail::read_file(json_path);
    bytes = detail::read_file(bin_path);
  } catch (const FormatError& e) {
    throw ModelFormatError(e.what());
  }
  try {
    const auto j = ordered_json::parse(text.begin(), text.end());
    if (j.at("format").get<std::string>() != "haluprobe-model") {
      throw ModelFormatError("model.json is not a haluprobe model");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw ModelFormatError("unsupported model format version " +
                             std::to_string(version));
    }
    const auto floats = j.at("params_floats").get<std::size_t>();
    if (bytes.size() != floats * 4) {
      throw ModelFormatError("params.bin holds " + std::to_string(bytes.size()) +
                             " bytes, expected " + std::to_string(floats * 4));
    }
    const auto blob = detail::decode_f32(bytes.data(), floats);
    std::size_t used = 0;
    DetectorModel m = model_from_json(j.at("model"), blob, used);
    if (used != floats) {
      throw ModelFormatError("params.bin holds unreferenced values");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model.json: ") + e.what());
  } catch (const ConfigError& e) {
    throw ModelFormatError(std::string("model.json: ") + e.what());
  }
}

DetectorModel load_model(const fs::path& dir, Family expected) {
  DetectorModel m = load_model(dir);
  if (m.family != expected) {
    throw ModelFormatError("model family is " + std::string(family_name(m.family)) +
                           ", expected " + std::string(family_name(expected)));
  }
  return m;
}

}  // namespace haluprobe::detect
