#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "haluprobe/detect.h"
#include "haluprobe/feature_table.h"
#include "haluprobe/features.h"
#include "haluprobe/selection.h"
#include "haluprobe/trace.h"

namespace haluprobe::eval {

// Confusion counts with hallucinated as the positive class.
struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  double accuracy() const;
  // Empty when the class has no members.
  std::optional<double> recall_halu() const;
  std::optional<double> recall_fact() const;

  void add(Label truth, Label predicted);
  bool operator==(const Metrics&) const = default;
};

struct Evaluation {
  Metrics response;
  // Present when the strategy yields more than one unit per response.
  std::optional<Metrics> unit;
};

// Response labels keyed by trace id.
using ResponseLabels = std::map<std::string, Label>;
ResponseLabels response_labels(const TraceSet& set);

// Scores every row, ORs unit decisions per response (rows grouped by
// trace id) and compares with `labels`. When `labels` is empty a response is
// taken as hallucinated iff one of its units is.
Evaluation evaluate(const detect::DetectorModel& model,
                    const FeatureTable& table,
                    double threshold = kDefaultThreshold,
                    const ResponseLabels& labels = {});

struct Split {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

// Trace-level split stratified by response label; each class contributes
// round(n_c * test_fraction) traces to the test side. Throws ConfigError for
// unlabeled traces or a fraction outside (0, 1).
Split stratified_split(const TraceSet& set, double test_fraction,
                       std::uint64_t seed);

// Hashes of the rows each fitted object saw and of the rows it was scored on.
struct CellAudit {
  std::string cell;
  std::vector<std::uint64_t> fitted_rows;
  std::vector<std::uint64_t> tested_rows;
};

struct ExperimentConfig {
  detect::TrainConfig train;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  double threshold = kDefaultThreshold;
  int workers = 1;
  bool audit = false;
};

// --- ablation ---------------------------------------------------------------

struct AblationRow {
  FeatureId feature = FeatureId::kLookbackRatio;
  detect::Family family = detect::Family::kLogReg;
  Evaluation evaluation;
  std::string error;  // non-empty when the cell failed
};

struct AblationReport {
  std::string strategy;
  std::vector<AblationRow> rows;  // feature-major, families in given order
  std::vector<CellAudit> audit;
};

// One model per (enabled feature, family), each trained on that feature
// alone. Failing cells record their error and the run continues.
AblationReport run_ablation(const TraceSet& set,
                            const SelectionStrategy& strategy,
                            const std::vector<detect::Family>& families,
                            const features::FeatureConfig& fconfig,
                            const ExperimentConfig& config);

// --- token strategies -------------------------------------------------------

struct TokenStudyRow {
  std::string strategy;
  std::size_t train_units = 0;
  Evaluation evaluation;
  std::string error;
};

struct TokenStudyReport {
  detect::Family family = detect::Family::kLogReg;
  std::vector<TokenStudyRow> rows;
  std::vector<CellAudit> audit;
};

// Same trace split for every strategy.
TokenStudyReport run_token_study(const TraceSet& set,
                                 const std::vector<SelectionStrategy>& strategies,
                                 detect::Family family,
                                 const features::FeatureConfig& fconfig,
                                 const ExperimentConfig& config);

// --- transfer ---------------------------------------------------------------

struct NamedSet {
  std::string name;
  const TraceSet* set = nullptr;
};

struct TransferCell {
  std::string train;
  std::string test;
  bool diagonal = false;
  Metrics metrics;
  std::string error;
};

struct TransferReport {
  detect::Family family = detect::Family::kLogReg;
  std::string strategy;
  std::vector<TransferCell> cells;  // train-major
  std::vector<CellAudit> audit;
};

// Each set is split once. A model trained on the train side of set A is
// scored on the test side of every test set, so diagonal cells are held out.
// Throws ConfigError when either list is empty.
TransferReport run_transfer(const std::vector<NamedSet>& train_sets,
                            const std::vector<NamedSet>& test_sets,
                            const features::FeatureConfig& fconfig,
                            detect::Family family,
                            const SelectionStrategy& strategy,
                            const ExperimentConfig& config);

// --- cohort curves ----------------------------------------------------------

enum class Axis { kLayer, kHead };

struct CohortPoint {
  int layer = 0;
  int head = -1;
  double mean_a = 0.0;
  double se_a = 0.0;
  double mean_b = 0.0;
  double se_b = 0.0;
};

struct CohortCurve {
  FeatureId feature = FeatureId::kLookbackRatio;
  Axis axis = Axis::kLayer;
  std::string cohort_a;
  std::string cohort_b;
  std::size_t units_a = 0;
  std::size_t units_b = 0;
  std::vector<CohortPoint> points;  // L points, or L*H for the head axis
};

// Per-token means and standard errors of `feature` at every layer (or head)
// for two cohorts. hidden_state is summarized per layer by the RMS of the
// hidden vector. The head axis needs an attention feature.
CohortCurve cohort_curves(const NamedSet& a, const NamedSet& b,
                          FeatureId feature, Axis axis, int workers = 1);
// Hallucinated (A) versus factual (B) traces of one set.
CohortCurve cohort_curves(const TraceSet& set, FeatureId feature, Axis axis,
                          int workers = 1);

// --- overhead ---------------------------------------------------------------

struct OverheadRow {
  FeatureId feature = FeatureId::kLookbackRatio;
  std::string category;
  std::string name;
  // Complexity strings as printed in the reference table (LaTeX) and as
  // plain text.
  std::string storage_tex;
  std::string compute_tex;
  std::string storage;
  std::string compute;
  double seconds_per_token = 0.0;  // median over repetitions
  int repetitions = 0;
  std::size_t tokens = 0;
  std::string warning;
};

// The eight features of the overhead table, in table order.
std::vector<FeatureId> overhead_features();

// Times extraction of each feature alone under win:8,4 on `set`. Features
// outside the overhead table are rejected with ConfigError.
std::vector<OverheadRow> bench_overhead(const TraceSet& set,
                                        const std::vector<FeatureId>& features,
                                        int repetitions = 5);

// --- reports ----------------------------------------------------------------

void write_report(const AblationReport& report, const std::filesystem::path& dir);
void write_report(const TokenStudyReport& report,
                  const std::filesystem::path& dir);
void write_report(const TransferReport& report, const std::filesystem::path& dir);
// Writes curves_<feature>.csv.
void write_report(const CohortCurve& curve, const std::filesystem::path& dir);
void write_report(const std::vector<OverheadRow>& rows,
                  const std::filesystem::path& dir);

std::string metrics_json_text(const Evaluation& evaluation);

}  // namespace haluprobe::eval
