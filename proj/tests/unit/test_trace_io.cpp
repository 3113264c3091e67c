#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "builders.h"
#include "haluprobe/errors.h"
#include "haluprobe/synth.h"
#include "haluprobe/trace_io.h"
#include "mutants.h"

using namespace haluprobe;
using namespace haluprobe::testing;
namespace fs = std::filesystem;

namespace {

TraceSet small_synth(int n, std::uint64_t seed) {
  synth::SynthConfig c;
  c.n_traces = n;
  c.gen_len_min = 3;
  c.gen_len_max = 6;
  return synth::generate(c, seed);
}

nlohmann::ordered_json manifest(const fs::path& dir) {
  const auto b = slurp(dir / "manifest.json");
  return nlohmann::ordered_json::parse(b.begin(), b.end());
}

}  // namespace

TEST_CASE("round trip is exact and writing is deterministic") {
  const TraceSet set = random_trace_set({.n_traces = 30}, 21);
  const fs::path a = temp_dir("rt_a"), b = temp_dir("rt_b");
  write_trace_set(set, a);
  write_trace_set(set, b);
  CHECK(load_trace_set(a) == set);
  for (const char* f : {"manifest.json", "attention.bin", "hidden.bin",
                        "activation.bin", "logits.bin"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  // load -> write reproduces the bytes.
  const fs::path c = temp_dir("rt_c");
  write_trace_set(load_trace_set(a), c);
  CHECK(slurp(a / "attention.bin") == slurp(c / "attention.bin"));
  CHECK(slurp(a / "manifest.json") == slurp(c / "manifest.json"));
}

TEST_CASE("magic is the first manifest field") {
  const fs::path d = temp_dir("magic");
  write_trace_set(small_synth(2, 1), d);
  const auto j = manifest(d);
  CHECK(j.begin().key() == "magic");
  CHECK(j["magic"] == kTraceMagic);
  CHECK(j["format_version"] == kTraceFormatVersion);
}

TEST_CASE("empty set keeps its meta") {
  TraceSet set;
  set.meta = synth::SynthConfig::default_meta();
  set.dataset_name = "empty";
  const fs::path d = temp_dir("empty");
  write_trace_set(set, d);
  const TraceSet back = load_trace_set(d);
  CHECK(back.traces.empty());
  CHECK(back.meta == set.meta);
}

TEST_CASE("absent section has no blob") {
  synth::SynthConfig c;
  c.n_traces = 3;
  c.meta.sections.activation = false;
  const TraceSet set = synth::generate(c, 2);
  const fs::path d = temp_dir("absent");
  write_trace_set(set, d);
  CHECK_FALSE(fs::exists(d / "activation.bin"));
  const auto j = manifest(d);
  for (const auto& s : j["meta"]["sections_present"]) CHECK(s != "activation");
  CHECK(load_trace_set(d) == set);
}

TEST_CASE("unknown manifest fields are ignored") {
  // Writers in other languages may record extra per-trace data, such as
  // tokenizer offsets.
  const TraceSet set = small_synth(3, 4);
  const fs::path d = temp_dir("extra");
  write_trace_set(set, d);
  auto j = manifest(d);
  j["dumper"] = {{"model", "tiny"}};
  for (auto& rec : j["traces"]) rec["token_offsets"] = {{0, 3}, {3, 5}};
  std::ofstream(d / "manifest.json") << j.dump(1);
  CHECK(load_trace_set(d) == set);
}

TEST_CASE("corruption mutants raise their error class") {
  const fs::path clean = temp_dir("clean");
  write_trace_set(small_synth(4, 5), clean);
  const auto mutants = trace_set_mutants();
  CHECK(mutants.size() == 10);
  for (const auto& m : mutants) {
    std::string rule;
    const auto cls = load_error_class(
        clean, m, [](const fs::path& p) { load_trace_set(p); }, &rule);
    CHECK_MESSAGE(cls == m.expected_error, m.name);
    if (!m.expected_rule.empty()) CHECK_MESSAGE(rule == m.expected_rule, m.name);
  }
}

TEST_CASE("format errors name the file") {
  const fs::path d = temp_dir("named");
  write_trace_set(small_synth(2, 6), d);
  fs::resize_file(d / "logits.bin", 8);
  try {
    load_trace_set(d);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.file().find("logits.bin") != std::string::npos);
  }
}

TEST_CASE("read_trace_set skips invariant checks") {
  const fs::path d = temp_dir("noval");
  write_trace_set(small_synth(2, 8), d);
  auto j = manifest(d);
  j["traces"][0]["label"] = "factual";
  j["traces"][0]["problematic_spans"] = {{0, 1}};
  std::ofstream(d / "manifest.json") << j.dump(1);
  CHECK_THROWS_AS(load_trace_set(d), ValidationError);
  const TraceSet raw = read_trace_set(d);
  CHECK(raw.traces.size() == 2);
  CHECK_FALSE(find_violations(raw).empty());
}

TEST_CASE("unwritable path is an IoError") {
  const fs::path d = temp_dir("io");
  std::ofstream(d / "file") << "x";
  CHECK_THROWS_AS(write_trace_set(small_synth(1, 1), d / "file" / "sub"), IoError);
}
