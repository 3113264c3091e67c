#include "haluprobe/trace_io.h"

#include <array>
#include <string>

#include <json.hpp>

#include "binary_io.h"

namespace haluprobe {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct BlobSpec {
  Section section;
  const char* file;
  std::vector<float> InferenceTrace::*member;
};

constexpr std::array<BlobSpec, 4> kBlobs{{
    {Section::kAttention, "attention.bin", &InferenceTrace::attention},
    {Section::kHidden, "hidden.bin", &InferenceTrace::hidden},
    {Section::kActivation, "activation.bin", &InferenceTrace::activation},
    {Section::kLogit, "logits.bin", &InferenceTrace::logits},
}};

std::size_t expected_floats(const TraceMeta& meta, Section s,
                            const InferenceTrace& tr) {
  switch (s) {
    case Section::kAttention:
      return attention_float_count(meta, tr.prompt_len, tr.gen_len);
    case Section::kHidden:
      return hidden_float_count(meta, tr.gen_len);
    case Section::kActivation:
      return activation_float_count(meta, tr.gen_len);
    case Section::kLogit:
      return logit_float_count(meta, tr.gen_len);
  }
  return 0;
}

ordered_json meta_to_json(const TraceMeta& meta) {
  ordered_json sections = ordered_json::array();
  for (const auto& b : kBlobs) {
    if (meta.sections.has(b.section)) {
      sections.push_back(std::string(section_name(b.section)));
    }
  }
  ordered_json j;
  j["model_name"] = meta.model_name;
  j["num_layers"] = meta.num_layers;
  j["num_heads"] = meta.num_heads;
  j["hidden_dim"] = meta.hidden_dim;
  j["ffn_dim"] = meta.ffn_dim;
  j["vocab_size"] = meta.vocab_size;
  j["topk"] = meta.topk;
  j["sections_present"] = sections;
  return j;
}

[[noreturn]] void manifest_error(const fs::path& path, const std::string& what) {
  throw FormatError(path.string(), 0, what);
}

TraceMeta meta_from_json(const ordered_json& j, const fs::path& manifest) {
  TraceMeta meta;
  try {
    meta.model_name = j.at("model_name").get<std::string>();
    meta.num_layers = j.at("num_layers").get<int>();
    meta.num_heads = j.at("num_heads").get<int>();
    meta.hidden_dim = j.at("hidden_dim").get<int>();
    meta.ffn_dim = j.at("ffn_dim").get<int>();
    meta.vocab_size = j.at("vocab_size").get<int>();
    meta.topk = j.at("topk").get<int>();
    for (const auto& name : j.at("sections_present")) {
      const auto s = name.get<std::string>();
      bool known = false;
      for (const auto& b : kBlobs) {
        if (s == section_name(b.section)) {
          meta.sections.set(b.section, true);
          known = true;
        }
      }
      if (!known) manifest_error(manifest, "unknown section '" + s + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    manifest_error(manifest, std::string("bad meta: ") + e.what());
  }
  try {
    validate_meta(meta);
  } catch (const ConfigError& e) {
    manifest_error(manifest, e.what());
  }
  return meta;
}

}  // namespace

void write_trace_set(const TraceSet& set, const fs::path& dir) {
  detail::ensure_dir(dir);
  const TraceMeta& meta = set.meta;

  std::array<std::vector<char>, kBlobs.size()> blobs;
  ordered_json traces = ordered_json::array();
  for (const auto& tr : set.traces) {
    ordered_json rec;
    rec["trace_id"] = tr.trace_id;
    rec["prompt_len"] = tr.prompt_len;
    rec["gen_len"] = tr.gen_len;
    rec["label"] = std::string(label_name(tr.label));
    ordered_json spans = ordered_json::array();
    for (const auto& s : tr.problematic_spans) {
      spans.push_back({s.start, s.end});
    }
    rec["problematic_spans"] = spans;
    ordered_json blob_refs = ordered_json::object();
    for (std::size_t i = 0; i < kBlobs.size(); ++i) {
      if (!meta.sections.has(kBlobs[i].section)) continue;
      const auto& data = tr.*(kBlobs[i].member);
      blob_refs[section_name(kBlobs[i].section)] = {
          {"offset", blobs[i].size()}, {"length", data.size() * 4}};
      detail::append_f32(blobs[i], data);
    }
    rec["blobs"] = blob_refs;
    traces.push_back(std::move(rec));
  }

  ordered_json manifest;
  manifest["magic"] = kTraceMagic;
  manifest["format_version"] = kTraceFormatVersion;
  manifest["dataset_name"] = set.dataset_name;
  manifest["meta"] = meta_to_json(meta);
  manifest["traces"] = std::move(traces);

  for (std::size_t i = 0; i < kBlobs.size(); ++i) {
    const fs::path blob_path = dir / kBlobs[i].file;
    if (meta.sections.has(kBlobs[i].section)) {
      detail::write_file(blob_path, blobs[i]);
    } else {
      std::error_code ec;
      fs::remove(blob_path, ec);
    }
  }
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

TraceSet read_trace_set(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const std::vector<char> raw = detail::read_file(manifest_path);

  ordered_json manifest;
  try {
    manifest = ordered_json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(manifest_path.string(), e.byte,
                      std::string("invalid JSON: ") + e.what());
  }
  if (!manifest.is_object() || manifest.empty() ||
      manifest.begin().key() != "magic" ||
      manifest.begin().value() != kTraceMagic) {
    manifest_error(manifest_path,
                   std::string("first field must be magic \"") + kTraceMagic +
                       "\"");
  }
  if (!manifest.contains("format_version") ||
      !manifest["format_version"].is_number_integer()) {
    manifest_error(manifest_path, "format_version missing");
  }
  const int version = manifest["format_version"].get<int>();
  if (version != kTraceFormatVersion) {
    throw UnsupportedVersionError("trace format_version " +
                                  std::to_string(version) +
                                  " is not supported (expected " +
                                  std::to_string(kTraceFormatVersion) + ")");
  }

  TraceSet set;
  set.meta = meta_from_json(manifest.value("meta", ordered_json::object()),
                            manifest_path);
  set.dataset_name = manifest.value("dataset_name", std::string());

  std::array<std::vector<char>, kBlobs.size()> blobs;
  for (std::size_t i = 0; i < kBlobs.size(); ++i) {
    if (set.meta.sections.has(kBlobs[i].section)) {
      blobs[i] = detail::read_file(dir / kBlobs[i].file);
    }
  }

  if (!manifest.contains("traces") || !manifest["traces"].is_array()) {
    manifest_error(manifest_path, "traces array missing");
  }
  for (const auto& rec : manifest["traces"]) {
    InferenceTrace tr;
    try {
      tr.trace_id = rec.at("trace_id").get<std::string>();
      tr.prompt_len = rec.at("prompt_len").get<int>();
      tr.gen_len = rec.at("gen_len").get<int>();
      tr.label = parse_label(rec.at("label").get<std::string>());
      for (const auto& s : rec.at("problematic_spans")) {
        tr.problematic_spans.push_back(
            Span{s.at(0).get<int>(), s.at(1).get<int>()});
      }
    } catch (const nlohmann::json::exception& e) {
      manifest_error(manifest_path, std::string("bad trace record: ") +
                                        e.what());
    } catch (const ConfigError& e) {
      manifest_error(manifest_path, e.what());
    }
    if (tr.gen_len < 1 || tr.prompt_len < 0) {
      throw ValidationError(tr.trace_id, "gen_len_positive",
                            "gen_len must be >= 1 and prompt_len >= 0");
    }

    for (std::size_t i = 0; i < kBlobs.size(); ++i) {
      const Section s = kBlobs[i].section;
      if (!set.meta.sections.has(s)) continue;
      const std::string file = (dir / kBlobs[i].file).string();
      const auto name = std::string(section_name(s));
      std::uint64_t offset = 0;
      std::uint64_t length = 0;
      try {
        const auto& ref = rec.at("blobs").at(name);
        offset = ref.at("offset").get<std::uint64_t>();
        length = ref.at("length").get<std::uint64_t>();
      } catch (const nlohmann::json::exception&) {
        manifest_error(manifest_path,
                       "trace '" + tr.trace_id + "' lacks blob ref '" + name +
                           "'");
      }
      const std::size_t want = expected_floats(set.meta, s, tr) * 4;
      if (length != want) {
        throw FormatError(file, offset,
                          "trace '" + tr.trace_id + "' declares " +
                              std::to_string(length) + " bytes, shape needs " +
                              std::to_string(want));
      }
      if (offset % 4 != 0 || offset + length > blobs[i].size()) {
        throw FormatError(file, offset,
                          "blob truncated or misaligned for trace '" +
                              tr.trace_id + "' (file has " +
                              std::to_string(blobs[i].size()) + " bytes)");
      }
      tr.*(kBlobs[i].member) =
          detail::decode_f32(blobs[i].data() + offset, length / 4);
    }
    set.traces.push_back(std::move(tr));
  }

  return set;
}

TraceSet load_trace_set(const fs::path& dir) {
  TraceSet set = read_trace_set(dir);
  validate_set(set);
  return set;
}

}  // namespace haluprobe
