#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "haluprobe/feature_table.h"

namespace haluprobe::detect {

enum class Family { kLogReg, kMlp, kSiamese, kEnsemble };

std::string_view family_name(Family family);
// Accepts logreg | mlp | siamese | ensemble.
Family parse_family(std::string_view name);

// Per-dimension z-scoring fitted on training rows. Dimensions whose spread is
// negligible get stddev 1 and are flagged; they map to x - mean.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::uint8_t> degenerate;

  std::size_t dims() const { return mean.size(); }
  bool operator==(const Standardizer&) const = default;
};

// Throws TrainingError for an empty table.
Standardizer fit_standardizer(const FeatureTable& table);
// Throws LayoutError when x has the wrong width.
std::vector<double> apply_standardizer(const Standardizer& s,
                                       std::span<const double> x);

// Fully connected network. Hidden layers use ReLU, the output layer is
// linear. Layer k stores W_k (out x in, row-major) followed by b_k in `params`.
struct Network {
  std::vector<int> widths;  // input width first, output width last
  std::vector<double> params;

  int inputs() const { return widths.front(); }
  int outputs() const { return widths.back(); }
  std::size_t param_count() const;
  bool operator==(const Network&) const = default;
};

Network make_network(std::vector<int> widths);
// Glorot-uniform weights, zero biases.
void init_glorot(Network& net, std::uint64_t seed);

enum class StepControl {
  // A step that raises the loss is retried at half the learning rate, so the
  // recorded loss never increases. Accepted steps grow the rate by 1.2x.
  kBacktracking,
  // Plain fixed-rate descent; a loss increase or non-finite loss aborts.
  kFixed,
};

enum class MemberKind { kLogReg, kMlp };

struct TrainConfig {
  double learning_rate = 0.5;
  int epochs = 300;
  double l2 = 1e-4;
  // 0 means full batch; otherwise shuffled minibatches of this size.
  int batch_size = 0;
  StepControl step_control = StepControl::kBacktracking;
  // Inverse-frequency class weights in the classification loss.
  bool class_weighting = true;
  std::vector<int> mlp_hidden{64, 32};
  int embedding_dim = 16;
  double margin = 1.0;
  // Contrastive pairs drawn once before training: half same-label, half
  // cross-label.
  int siamese_pairs = 2048;
  // Ensemble members, each trained on its own bootstrap resample.
  std::vector<MemberKind> ensemble_members{MemberKind::kLogReg,
                                           MemberKind::kLogReg,
                                           MemberKind::kLogReg};
  bool ensemble_bootstrap = true;
  bool ensemble_uniform_weights = false;
  std::uint64_t seed = 0;
};

// Throws ConfigError when a field is out of range.
void validate_config(const TrainConfig& config);

struct DetectorModel {
  Family family = Family::kLogReg;
  FeatureLayout layout;
  Standardizer standardizer;  // unused for ensembles; members carry their own
  // logreg / mlp: classifier with one logit output. siamese: encoder.
  Network net;
  // siamese only
  std::vector<double> prototype_factual;
  std::vector<double> prototype_halu;
  double temperature = 1.0;
  double margin = 1.0;
  // ensemble only
  std::vector<DetectorModel> members;
  std::vector<double> weights;
  std::uint64_t seed = 0;

  bool operator==(const DetectorModel&) const = default;
};

// Optional training diagnostics.
struct TrainLog {
  // Loss after each epoch (accepted point), starting with the initial loss.
  std::vector<double> loss;
  int rejected_steps = 0;
  // row_hash() of every row the model or its standardizer was fitted on.
  std::vector<std::uint64_t> fitted_rows;
};

// Throw TrainingError when the table lacks a class or holds unlabeled rows,
// DivergenceError when the loss becomes non-finite (or rises under
// StepControl::kFixed).
DetectorModel train_logreg(const FeatureTable& table, const TrainConfig& config,
                           TrainLog* log = nullptr);
DetectorModel train_mlp(const FeatureTable& table, const TrainConfig& config,
                        TrainLog* log = nullptr);
DetectorModel train_siamese(const FeatureTable& table,
                            const TrainConfig& config, TrainLog* log = nullptr);
// Soft vote with weights proportional to each member's training accuracy on
// `table` (or uniform). Throws LayoutError when layouts differ and ConfigError
// for fewer than two members.
DetectorModel train_ensemble(std::vector<DetectorModel> members,
                             const FeatureTable& table, bool uniform_weights,
                             TrainLog* log = nullptr);
// Dispatches on family. Ensembles train config.ensemble_members first.
DetectorModel train(Family family, const FeatureTable& table,
                    const TrainConfig& config, TrainLog* log = nullptr);

// Probability that the unit is hallucinated. Throws LayoutError for a width
// mismatch and ValidationError for non-finite input.
double predict(const DetectorModel& model, std::span<const double> x);
// Checks the table layout against the model, then predicts every row.
std::vector<double> predict(const DetectorModel& model,
                            const FeatureTable& table);

// Siamese encoder output for a raw (unstandardized) vector.
std::vector<double> embed(const DetectorModel& model, std::span<const double> x);
// Contrastive loss of one embedding pair: d^2/2 for a same-label pair,
// max(0, margin - d)^2/2 for a cross-label pair.
double pair_loss(std::span<const double> a, std::span<const double> b,
                 bool same_label, double margin);

// Max relative error between analytic and central-difference gradients
// (step 1e-4, standardized inputs) of the training loss at a seeded
// initialization. For siamese this is the contrastive pair loss. Sample must
// hold at most 32 rows.
double grad_check(Family family, const FeatureTable& sample,
                  const TrainConfig& config);

inline constexpr int kModelFormatVersion = 1;

// Writes model.json and params.bin into dir.
void save_model(const DetectorModel& model, const std::filesystem::path& dir);
// Throws ModelFormatError for a version mismatch, bad JSON or a params.bin
// that does not match the descriptor.
DetectorModel load_model(const std::filesystem::path& dir);
// As load_model, and throws ModelFormatError unless the family matches.
DetectorModel load_model(const std::filesystem::path& dir, Family expected);

}  // namespace haluprobe::detect
