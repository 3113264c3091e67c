#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "haluprobe/detect.h"
#include "haluprobe/errors.h"
#include "haluprobe/eval.h"
#include "haluprobe/feature_table.h"
#include "haluprobe/features.h"
#include "haluprobe/synth.h"
#include "haluprobe/trace_io.h"

namespace haluprobe::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

int default_workers() {
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Everything a subcommand may read. Unused fields keep their defaults.
struct RunConfig {
  std::string subcommand;
  std::string trace_dir;
  std::string table_dir;
  std::string model_dir;
  std::string out;
  std::string config_file;

  std::string strategy = "all";
  bool strict_windows = false;
  std::string features = "all";
  std::string family = "logreg";
  std::string granularity = "layer_mean";
  std::uint64_t seed = 0;
  double threshold = kDefaultThreshold;
  int workers = default_workers();

  // training
  double learning_rate = detect::TrainConfig{}.learning_rate;
  int epochs = detect::TrainConfig{}.epochs;
  double l2 = detect::TrainConfig{}.l2;
  int batch_size = 0;
  bool fixed_step = false;
  bool class_weighting = true;
  std::vector<int> hidden = detect::TrainConfig{}.mlp_hidden;
  int embedding_dim = detect::TrainConfig{}.embedding_dim;
  double margin = detect::TrainConfig{}.margin;
  int pairs = detect::TrainConfig{}.siamese_pairs;
  std::string members = "logreg,logreg,logreg";
  bool uniform_weights = false;
  double test_fraction = 0.2;
  bool audit = false;

  // synth
  std::string synth_config;
  int n_traces = -1;

  // tokens
  std::string strategies = "win:4,2;win:2,1;per;first;last;all";
  // transfer
  std::vector<std::string> train_sets;
  std::vector<std::string> test_sets;
  // curves
  std::string cohort_b;
  std::string axis = "layer";
  // bench
  int repetitions = 5;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// --- option groups ----------------------------------------------------------

void add_extraction(CLI::App* app, RunConfig& c) {
  app->add_option("--strategy", c.strategy, "all | per | first | last | win:W,S")
      ->capture_default_str();
  app->add_flag("--strict-windows", c.strict_windows,
                "drop the trailing partial window");
  app->add_option("--features", c.features, "comma list of features, or all")
      ->capture_default_str();
  app->add_option("--granularity", c.granularity, "per_head | layer_mean")
      ->capture_default_str();
}

void add_training(CLI::App* app, RunConfig& c) {
  app->add_option("--family", c.family, "logreg | mlp | siamese | ensemble")
      ->capture_default_str();
  app->add_option("--lr", c.learning_rate, "initial learning rate")
      ->capture_default_str();
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--l2", c.l2)->capture_default_str();
  app->add_option("--batch-size", c.batch_size, "0 = full batch")
      ->capture_default_str();
  app->add_flag("--fixed-step", c.fixed_step,
                "fixed learning rate; abort when the loss rises");
  app->add_option("--class-weighting", c.class_weighting)->capture_default_str();
  app->add_option("--hidden", c.hidden, "MLP hidden widths")
      ->delimiter(',')
      ->capture_default_str();
  app->add_option("--embedding-dim", c.embedding_dim)->capture_default_str();
  app->add_option("--margin", c.margin)->capture_default_str();
  app->add_option("--pairs", c.pairs, "siamese training pairs")
      ->capture_default_str();
  app->add_option("--members", c.members, "ensemble members (logreg|mlp list)")
      ->capture_default_str();
  app->add_flag("--uniform-weights", c.uniform_weights,
                "equal ensemble weights");
}

void add_experiment(CLI::App* app, RunConfig& c) {
  app->add_option("--test-fraction", c.test_fraction)->capture_default_str();
  app->add_option("--threshold", c.threshold)->capture_default_str();
  app->add_flag("--audit", c.audit, "record fitted/tested row hashes");
}

void add_common(CLI::App* app, RunConfig& c) {
  app->add_option("--seed", c.seed)->capture_default_str();
  app->add_option("--workers", c.workers)->capture_default_str();
  app->add_option("--config", c.config_file,
                  "JSON file mirroring the flags; flags win");
}

// --- conversions ------------------------------------------------------------

SelectionStrategy strategy_of(const RunConfig& c) {
  auto s = parse_strategy(c.strategy, c.strict_windows);
  validate_strategy(s);
  return s;
}

features::FeatureConfig feature_config_of(const RunConfig& c) {
  features::FeatureConfig f;
  f.enabled = parse_feature_list(c.features);
  if (c.granularity == "per_head") {
    f.head_granularity = features::HeadGranularity::kPerHead;
  } else if (c.granularity == "layer_mean") {
    f.head_granularity = features::HeadGranularity::kLayerMean;
  } else {
    throw ConfigError("unknown granularity '" + c.granularity + "'");
  }
  features::validate_config(f);
  return f;
}

detect::TrainConfig train_config_of(const RunConfig& c) {
  detect::TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.epochs = c.epochs;
  t.l2 = c.l2;
  t.batch_size = c.batch_size;
  t.step_control = c.fixed_step ? detect::StepControl::kFixed
                                : detect::StepControl::kBacktracking;
  t.class_weighting = c.class_weighting;
  t.mlp_hidden = c.hidden;
  t.embedding_dim = c.embedding_dim;
  t.margin = c.margin;
  t.siamese_pairs = c.pairs;
  t.ensemble_members.clear();
  for (const auto& m : split(c.members, ',')) {
    if (m == "logreg") {
      t.ensemble_members.push_back(detect::MemberKind::kLogReg);
    } else if (m == "mlp") {
      t.ensemble_members.push_back(detect::MemberKind::kMlp);
    } else {
      throw ConfigError("unknown ensemble member '" + m + "'");
    }
  }
  t.ensemble_uniform_weights = c.uniform_weights;
  t.seed = c.seed;
  detect::validate_config(t);
  return t;
}

eval::ExperimentConfig experiment_of(const RunConfig& c) {
  eval::ExperimentConfig e;
  e.train = train_config_of(c);
  e.test_fraction = c.test_fraction;
  e.split_seed = c.seed;
  e.threshold = c.threshold;
  e.workers = c.workers;
  e.audit = c.audit;
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) {
    throw ConfigError("--test-fraction must be in (0, 1)");
  }
  return e;
}

void check_workers(const RunConfig& c) {
  if (c.workers < 1) throw ConfigError("--workers must be >= 1");
}

// Table from --table, or extracted from --trace-dir.
FeatureTable input_table(const RunConfig& c, const features::FeatureConfig& f,
                         const SelectionStrategy& s, std::ostream& err) {
  if (!c.table_dir.empty()) return load_feature_table(c.table_dir);
  const TraceSet set = load_trace_set(c.trace_dir);
  err << "extracting " << set.traces.size() << " traces with "
      << strategy_string(s) << "\n";
  return features::extract_feature_table(set, f, s, c.workers);
}

void require_input(const RunConfig& c) {
  if (c.table_dir.empty() == c.trace_dir.empty()) {
    throw ConfigError("give exactly one of --trace-dir and --table");
  }
}

eval::NamedSet named_set_arg(const std::string& arg, std::vector<TraceSet>& store) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
    throw ConfigError("expected NAME=DIR, got '" + arg + "'");
  }
  store.push_back(load_trace_set(arg.substr(eq + 1)));
  return {arg.substr(0, eq), nullptr};
}

// --- subcommands ------------------------------------------------------------

int cmd_synth(const RunConfig& c, std::ostream& err) {
  check_workers(c);
  synth::SynthConfig sc;
  if (!c.synth_config.empty()) {
    std::ifstream in(c.synth_config);
    if (!in) throw ConfigError("cannot read '" + c.synth_config + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    sc = synth::config_from_json_text(buf.str());
  }
  if (c.n_traces >= 0) sc.n_traces = c.n_traces;
  synth::validate_config(sc);
  const TraceSet set = synth::generate(sc, c.seed, c.workers);
  write_trace_set(set, c.out);
  err << "wrote " << set.traces.size() << " traces to " << c.out << "\n";
  return kExitOk;
}

int cmd_extract(const RunConfig& c, std::ostream& err) {
  check_workers(c);
  const auto f = feature_config_of(c);
  const auto s = strategy_of(c);
  const TraceSet set = load_trace_set(c.trace_dir);
  const FeatureTable table = features::extract_feature_table(set, f, s, c.workers);
  save_feature_table(table, c.out);
  err << "wrote " << table.rows() << " x " << table.cols() << " table to "
      << c.out << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& err) {
  check_workers(c);
  require_input(c);
  const auto family = detect::parse_family(c.family);
  const auto t = train_config_of(c);
  const auto f = feature_config_of(c);
  const auto s = strategy_of(c);
  const FeatureTable table = input_table(c, f, s, err);
  detect::TrainLog log;
  const auto model = detect::train(family, table, t, &log);
  detect::save_model(model, c.out);

  json j;
  j["family"] = std::string(detect::family_name(family));
  j["rows"] = table.rows();
  j["strategy"] = table.strategy();
  j["loss"] = log.loss;
  j["rejected_steps"] = log.rejected_steps;
  std::ofstream(fs::path(c.out) / "train_log.json") << j.dump(2) << "\n";
  err << "trained " << c.family << " on " << table.rows() << " rows";
  if (!log.loss.empty()) err << ", final loss " << log.loss.back();
  err << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& err,
             const CLI::App& sub) {
  check_workers(c);
  require_input(c);
  const auto model = detect::load_model(c.model_dir);
  const auto s = strategy_of(c);

  // Unless given explicitly, features follow the model's layout.
  features::FeatureConfig f = feature_config_of(c);
  if (sub.get_option("--features")->count() == 0) {
    f.enabled.clear();
    for (const auto& e : model.layout) {
      if (std::find(f.enabled.begin(), f.enabled.end(), e.feature) ==
          f.enabled.end()) {
        f.enabled.push_back(e.feature);
      }
    }
  }
  if (sub.get_option("--granularity")->count() == 0) {
    const bool per_head = std::any_of(
        model.layout.begin(), model.layout.end(), [](const LayoutEntry& e) {
          return e.head >= 0 && feature_group(e.feature) == FeatureGroup::kAttention;
        });
    f.head_granularity = per_head ? features::HeadGranularity::kPerHead
                                  : features::HeadGranularity::kLayerMean;
  }

  eval::Evaluation ev;
  if (!c.table_dir.empty()) {
    ev = eval::evaluate(model, load_feature_table(c.table_dir), c.threshold);
  } else {
    const TraceSet set = load_trace_set(c.trace_dir);
    const auto table = features::extract_feature_table(set, f, s, c.workers);
    ev = eval::evaluate(model, table, c.threshold, eval::response_labels(set));
  }
  fs::create_directories(c.out);
  std::ofstream(fs::path(c.out) / "metrics.json") << eval::metrics_json_text(ev);
  err << "response accuracy " << ev.response.accuracy() << " on "
      << ev.response.total() << " responses\n";
  return kExitOk;
}

std::vector<detect::Family> families_of(const RunConfig& c) {
  std::vector<detect::Family> out;
  for (const auto& name : split(c.family, ',')) {
    out.push_back(detect::parse_family(name));
  }
  if (out.empty()) throw ConfigError("--family is empty");
  return out;
}

int cmd_ablate(const RunConfig& c, std::ostream& err) {
  check_workers(c);
  const auto families = families_of(c);
  const auto e = experiment_of(c);
  const auto f = feature_config_of(c);
  const auto s = strategy_of(c);
  const TraceSet set = load_trace_set(c.trace_dir);
  const auto report = eval::run_ablation(set, s, families, f, e);
  eval::write_report(report, c.out);
  for (const auto& row : report.rows) {
    err << feature_name(row.feature) << " " << detect::family_name(row.family)
        << ": ";
    if (row.error.empty()) {
      err << row.evaluation.response.accuracy() << "\n";
    } else {
      err << "failed: " << row.error << "\n";
    }
  }
  return kExitOk;
}

int cmd_tokens(const RunConfig& c, std::ostream& err) {
  check_workers(c);
  const auto family = detect::parse_family(c.family);
  const auto e = experiment_of(c);
  const auto f = feature_config_of(c);
  std::vector<SelectionStrategy> strategies;
  for (const auto& text : split(c.strategies, ';')) {
    strategies.push_back(parse_strategy(text, c.strict_windows));
    validate_strategy(strategies.back());
  }
  if (strategies.empty()) throw ConfigError("--strategies is empty");
  const TraceSet set = load_trace_set(c.trace_dir);
  const auto report = eval::run_token_study(set, strategies, family, f, e);
  eval::write_report(report, c.out);
  for (const auto& row : report.rows) {
    err << row.strategy << ": ";
    if (row.error.empty()) {
      err << row.evaluation.response.accuracy() << "\n";
    } else {
      err << "failed: " << row.error << "\n";
    }
  }
  return kExitOk;
}

int cmd_transfer(const RunConfig& c, std::ostream& err) {
  check_workers(c);
  const auto family = detect::parse_family(c.family);
  const auto e = experiment_of(c);
  const auto f = feature_config_of(c);
  const auto s = strategy_of(c);

  // Sets named on both sides are loaded once.
  std::vector<std::string> args = c.train_sets;
  for (const auto& t : c.test_sets) {
    if (std::find(args.begin(), args.end(), t) == args.end()) args.push_back(t);
  }
  std::vector<TraceSet> store;
  store.reserve(args.size());
  std::vector<eval::NamedSet> named;
  for (const auto& a : args) named.push_back(named_set_arg(a, store));
  for (std::size_t i = 0; i < named.size(); ++i) named[i].set = &store[i];

  auto pick = [&](const std::vector<std::string>& wanted) {
    std::vector<eval::NamedSet> out;
    for (const auto& w : wanted) {
      const auto it = std::find(args.begin(), args.end(), w);
      out.push_back(named[static_cast<std::size_t>(it - args.begin())]);
    }
    return out;
  };
  const auto train_sets = pick(c.train_sets);
  const auto test_sets = c.test_sets.empty() ? train_sets : pick(c.test_sets);
  const auto report = eval::run_transfer(train_sets, test_sets, f, family, s, e);
  eval::write_report(report, c.out);
  for (const auto& cell : report.cells) {
    err << cell.train << " -> " << cell.test << ": ";
    if (cell.error.empty()) {
      err << cell.metrics.accuracy() << "\n";
    } else {
      err << "failed: " << cell.error << "\n";
    }
  }
  return kExitOk;
}

int cmd_curves(const RunConfig& c, std::ostream& err) {
  check_workers(c);
  eval::Axis axis;
  if (c.axis == "layer") {
    axis = eval::Axis::kLayer;
  } else if (c.axis == "head") {
    axis = eval::Axis::kHead;
  } else {
    throw ConfigError("unknown axis '" + c.axis + "'");
  }
  std::vector<FeatureId> feats = parse_feature_list(c.features);
  if (axis == eval::Axis::kHead && c.features == "all") {
    feats = features_in_group(FeatureGroup::kAttention);
  }
  const TraceSet a = load_trace_set(c.trace_dir);
  std::optional<TraceSet> b;
  if (!c.cohort_b.empty()) b = load_trace_set(c.cohort_b);
  auto name_of = [](const TraceSet& set, const std::string& dir) {
    return set.dataset_name.empty() ? dir : set.dataset_name;
  };
  for (FeatureId id : feats) {
    const auto curve =
        b ? eval::cohort_curves({name_of(a, c.trace_dir), &a},
                                {name_of(*b, c.cohort_b), &*b}, id, axis,
                                c.workers)
          : eval::cohort_curves(a, id, axis, c.workers);
    eval::write_report(curve, c.out);
    err << "curves_" << feature_name(id) << ".csv: " << curve.points.size()
        << " points\n";
  }
  return kExitOk;
}

int cmd_bench(const RunConfig& c, std::ostream& err, const CLI::App& sub) {
  if (c.repetitions < 1) throw ConfigError("--repetitions must be >= 1");
  const auto feats = sub.get_option("--features")->count() == 0
                         ? eval::overhead_features()
                         : parse_feature_list(c.features);
  const TraceSet set = load_trace_set(c.trace_dir);
  const auto rows = eval::bench_overhead(set, feats, c.repetitions);
  eval::write_report(rows, c.out);
  for (const auto& r : rows) {
    err << r.name << ": " << r.seconds_per_token << " s/token\n";
    if (!r.warning.empty()) err << "warning: " << r.warning << "\n";
  }
  return kExitOk;
}

int cmd_validate(const RunConfig& c, std::ostream& err) {
  const TraceSet set = read_trace_set(c.trace_dir);
  const auto violations = find_violations(set);
  for (const auto& v : violations) {
    err << "trace '" << v.trace_id << "' violates " << v.rule << ": "
        << v.detail << "\n";
  }
  if (!c.out.empty()) {
    json arr = json::array();
    for (const auto& v : violations) {
      arr.push_back({{"trace_id", v.trace_id}, {"rule", v.rule},
                     {"detail", v.detail}});
    }
    fs::create_directories(c.out);
    std::ofstream(fs::path(c.out) / "violations.json") << arr.dump(2) << "\n";
  }
  err << set.traces.size() << " traces, " << violations.size()
      << " violations\n";
  return violations.empty() ? kExitOk : kExitData;
}

// Applies the --config file to options not given on the command line.
void apply_config_file(CLI::App& sub) {
  const auto* opt = sub.get_option("--config");
  if (opt->count() == 0) return;
  const std::string path = opt->as<std::string>();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CLI::Option* o = sub.get_option_no_throw("--" + flag);
    if (o == nullptr || flag == "config") {
      throw ConfigError("unknown config key '" + key + "' for " + sub.get_name());
    }
    if (o->count() > 0) continue;
    std::vector<std::string> results;
    auto text = [](const json& v) {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
      return v.dump();
    };
    if (value.is_array()) {
      for (const auto& v : value) results.push_back(text(v));
    } else {
      results.push_back(text(value));
    }
    o->add_result(results);
    o->run_callback();
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& err) {
  RunConfig c;
  // Checked after the config file is merged, so the file may supply them.
  std::vector<CLI::Option*> required;
  auto req = [&required](CLI::Option* o) {
    required.push_back(o);
    return o;
  };
  CLI::App app{"haluprobe: hallucination detection from inference traces"};
  app.name("haluprobe");
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic trace set");
  synth->add_option("--synth-config", c.synth_config, "synthetic set JSON");
  synth->add_option("--n-traces", c.n_traces, "override n_traces");
  req(synth->add_option("--out", c.out, "output trace directory"));
  add_common(synth, c);

  auto* extract = app.add_subcommand("extract", "extract a feature table");
  req(extract->add_option("--trace-dir", c.trace_dir));
  req(extract->add_option("--out", c.out));
  add_extraction(extract, c);
  add_common(extract, c);

  auto* train = app.add_subcommand("train", "train a detector");
  train->add_option("--trace-dir", c.trace_dir);
  train->add_option("--table", c.table_dir, "extracted feature table");
  req(train->add_option("--out", c.out, "model directory"));
  add_extraction(train, c);
  add_training(train, c);
  add_common(train, c);

  auto* evalc = app.add_subcommand("eval", "score a detector");
  req(evalc->add_option("--model", c.model_dir));
  evalc->add_option("--trace-dir", c.trace_dir);
  evalc->add_option("--table", c.table_dir);
  req(evalc->add_option("--out", c.out));
  evalc->add_option("--threshold", c.threshold)->capture_default_str();
  add_extraction(evalc, c);
  add_common(evalc, c);

  auto* ablate = app.add_subcommand("ablate", "one detector per feature");
  req(ablate->add_option("--trace-dir", c.trace_dir));
  req(ablate->add_option("--out", c.out));
  add_extraction(ablate, c);
  add_training(ablate, c);
  add_experiment(ablate, c);
  add_common(ablate, c);

  auto* tokens = app.add_subcommand("tokens", "compare token strategies");
  req(tokens->add_option("--trace-dir", c.trace_dir));
  req(tokens->add_option("--out", c.out));
  tokens->add_option("--strategies", c.strategies, "';'-separated strategies")
      ->capture_default_str();
  add_extraction(tokens, c);
  add_training(tokens, c);
  add_experiment(tokens, c);
  add_common(tokens, c);

  auto* transfer = app.add_subcommand("transfer", "cross-set transfer matrix");
  req(transfer->add_option("--train-set", c.train_sets, "NAME=DIR, repeatable"));
  transfer->add_option("--test-set", c.test_sets,
                       "NAME=DIR, repeatable (default: the train sets)");
  req(transfer->add_option("--out", c.out));
  add_extraction(transfer, c);
  add_training(transfer, c);
  add_experiment(transfer, c);
  add_common(transfer, c);

  auto* curves = app.add_subcommand("curves", "per-layer cohort curves");
  req(curves->add_option("--trace-dir", c.trace_dir,
                         "cohort A (or both cohorts)"));
  curves->add_option("--cohort-b", c.cohort_b,
                     "cohort B; default splits --trace-dir by label");
  curves->add_option("--axis", c.axis, "layer | head")->capture_default_str();
  curves->add_option("--features", c.features)->capture_default_str();
  req(curves->add_option("--out", c.out));
  add_common(curves, c);

  auto* bench = app.add_subcommand("bench", "per-feature extraction overhead");
  req(bench->add_option("--trace-dir", c.trace_dir));
  bench->add_option("--features", c.features,
                    "default: the eight overhead-table features");
  bench->add_option("--repetitions", c.repetitions)->capture_default_str();
  req(bench->add_option("--out", c.out));
  add_common(bench, c);

  auto* validate = app.add_subcommand("validate", "check trace invariants");
  req(validate->add_option("--trace-dir", c.trace_dir));
  validate->add_option("--out", c.out, "write violations.json here");
  add_common(validate, c);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    err << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    err << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  c.subcommand = sub->get_name();
  try {
    apply_config_file(*sub);
    for (const CLI::Option* o : required) {
      if (sub->get_option_no_throw(o->get_name()) == o && o->count() == 0) {
        throw CLI::RequiredError(o->get_name());
      }
    }
    if (c.subcommand == "synth") return cmd_synth(c, err);
    if (c.subcommand == "extract") return cmd_extract(c, err);
    if (c.subcommand == "train") return cmd_train(c, err);
    if (c.subcommand == "eval") return cmd_eval(c, err, *sub);
    if (c.subcommand == "ablate") return cmd_ablate(c, err);
    if (c.subcommand == "tokens") return cmd_tokens(c, err);
    if (c.subcommand == "transfer") return cmd_transfer(c, err);
    if (c.subcommand == "curves") return cmd_curves(c, err);
    if (c.subcommand == "bench") return cmd_bench(c, err, *sub);
    if (c.subcommand == "validate") return cmd_validate(c, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "DivergenceError: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    err << "ConfigError: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << describe_error(e) << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace haluprobe::cli
