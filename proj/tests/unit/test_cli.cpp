#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "builders.h"
#include "cli.h"
#include "haluprobe/synth.h"
#include "haluprobe/trace_io.h"

using namespace haluprobe;
using haluprobe::testing::slurp;
using haluprobe::testing::temp_dir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream err;
  const int code = cli::run(args, err);
  return {code, err.str()};
}

nlohmann::ordered_json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::ordered_json::parse(in);
}

fs::path planted_dir() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir("cli_planted");
    synth::SynthConfig c;
    c.n_traces = 120;
    c.gen_len_min = 8;
    c.gen_len_max = 10;
    c.effects.lookback_delta = 0.2;
    c.effects.rank_delta = 4;
    const fs::path cfg = d / "synth.json";
    std::ofstream(cfg) << synth::config_to_json_text(c);
    const auto r = run({"synth", "--synth-config", cfg.string(), "--seed", "3",
                        "--out", (d / "set").string()});
    REQUIRE(r.code == 0);
    return d / "set";
  }();
  return dir;
}

}  // namespace

TEST_CASE("synth -> validate -> extract -> train -> eval") {
  const fs::path set = planted_dir();
  const fs::path work = temp_dir("cli_e2e");
  CHECK(run({"validate", "--trace-dir", set.string()}).code == 0);

  const auto table = work / "table";
  REQUIRE(run({"extract", "--trace-dir", set.string(), "--strategy", "win:4,2",
               "--features", "lookback_ratio,max_token_rank", "--out", table.string()})
              .code == 0);
  CHECK(fs::exists(table / "features.csv"));

  const auto model = work / "model";
  const auto tr = run({"train", "--table", table.string(), "--family", "mlp",
                       "--hidden", "8", "--epochs", "100", "--out", model.string()});
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  CHECK(fs::exists(model / "model.json"));
  CHECK(read_json(model / "train_log.json")["loss"].size() > 1);

  const auto ev = run({"eval", "--model", model.string(), "--trace-dir", set.string(),
                       "--strategy", "win:4,2", "--out", (work / "eval").string()});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const auto metrics = read_json(work / "eval" / "metrics.json");
  CHECK(metrics["response"]["accuracy"].get<double>() >= 0.95);
}

TEST_CASE("same flags and seed reproduce the same bytes") {
  const fs::path a = temp_dir("cli_rep_a"), b = temp_dir("cli_rep_b");
  for (const auto& d : {a, b}) {
    REQUIRE(run({"synth", "--n-traces", "6", "--seed", "9", "--out", d.string()}).code == 0);
  }
  CHECK(slurp(a / "attention.bin") == slurp(b / "attention.bin"));
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
}

TEST_CASE("exit codes") {
  const fs::path set = planted_dir();
  const fs::path work = temp_dir("cli_codes");

  CHECK(run({"--help"}).code == 0);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"validate", "--trace-dir", set.string(), "--no-such-flag"}).code == 1);
  CHECK(run({"extract", "--trace-dir", set.string()}).code == 1);  // missing --out
  CHECK(run({"extract", "--trace-dir", set.string(), "--strategy", "win:2,3",
             "--out", (work / "x").string()})
            .code == 1);

  const auto missing = run({"validate", "--trace-dir", (work / "nope").string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.rfind("FormatError: ", 0) == 0);

  // Single-class training data.
  synth::SynthConfig c;
  c.n_traces = 10;
  c.halu_fraction = 0.0;
  write_trace_set(synth::generate(c, 1), work / "factual");
  const auto single = run({"train", "--trace-dir", (work / "factual").string(),
                           "--out", (work / "m").string()});
  CHECK(single.code == 2);
  CHECK(single.err.find("TrainingError") != std::string::npos);

  const auto diverge = run({"train", "--trace-dir", set.string(), "--family", "mlp",
                            "--fixed-step", "--lr", "1000", "--out", (work / "d").string()});
  CHECK(diverge.code == 3);
  CHECK(diverge.err.find("DivergenceError: ") != std::string::npos);
}

TEST_CASE("validate reports every violation") {
  const fs::path work = temp_dir("cli_validate");
  const fs::path set = work / "set";
  fs::copy(planted_dir(), set);
  auto j = read_json(set / "manifest.json");
  for (int i : {0, 1}) {
    j["traces"][i]["label"] = "factual";
    j["traces"][i]["problematic_spans"] = {{0, 1}};
  }
  std::ofstream(set / "manifest.json") << j.dump(1);
  const auto r = run({"validate", "--trace-dir", set.string(), "--out", work.string()});
  CHECK_MESSAGE(r.code == 2, r.err);
  CHECK(read_json(work / "violations.json").size() == 2);
}

TEST_CASE("config file mirrors flags; flags win") {
  const fs::path work = temp_dir("cli_config");
  const fs::path cfg = work / "run.json";
  std::ofstream(cfg) << R"({"n_traces": 4, "seed": 5, "out": ")" +
                            (work / "from_file").string() + "\"}";
  REQUIRE(run({"synth", "--config", cfg.string()}).code == 0);
  CHECK(load_trace_set(work / "from_file").traces.size() == 4);

  REQUIRE(run({"synth", "--config", cfg.string(), "--n-traces", "2", "--out",
               (work / "flag").string()})
              .code == 0);
  CHECK(load_trace_set(work / "flag").traces.size() == 2);
  CHECK_FALSE(fs::exists(work / "from_file" / "unused"));

  std::ofstream(work / "bad.json") << R"({"n_trace": 4})";
  CHECK(run({"synth", "--config", (work / "bad.json").string(), "--out",
             (work / "bad").string()})
            .code == 1);
}

TEST_CASE("experiment subcommands write their reports") {
  const fs::path set = planted_dir();
  const fs::path work = temp_dir("cli_reports");
  const auto abl = run({"ablate", "--trace-dir", set.string(), "--family", "logreg",
                        "--features", "lookback_ratio,min_token_prob", "--epochs", "50",
                        "--out", (work / "abl").string()});
  REQUIRE_MESSAGE(abl.code == 0, abl.err);
  CHECK(read_json(work / "abl" / "ablation.json")["rows"].size() == 2);

  const auto tok = run({"tokens", "--trace-dir", set.string(), "--strategies",
                        "win:4,2;per", "--features", "lookback_ratio", "--epochs", "50",
                        "--out", (work / "tok").string()});
  REQUIRE_MESSAGE(tok.code == 0, tok.err);
  CHECK(fs::exists(work / "tok" / "token_study.csv"));

  const auto tra = run({"transfer", "--train-set", "A=" + set.string(), "--features",
                        "lookback_ratio", "--epochs", "50", "--out", (work / "tra").string()});
  REQUIRE_MESSAGE(tra.code == 0, tra.err);
  CHECK(fs::exists(work / "tra" / "transfer.json"));

  const auto cur = run({"curves", "--trace-dir", set.string(), "--features", "lookback_ratio",
                        "--out", (work / "cur").string()});
  REQUIRE_MESSAGE(cur.code == 0, cur.err);
  CHECK(fs::exists(work / "cur" / "curves_lookback_ratio.csv"));

  const auto ben = run({"bench", "--trace-dir", set.string(), "--features", "lookback_ratio",
                        "--out", (work / "ben").string()});
  REQUIRE_MESSAGE(ben.code == 0, ben.err);
  CHECK(fs::exists(work / "ben" / "overhead.csv"));
}
