#pragma once

#include <filesystem>

#include "haluprobe/trace.h"

namespace haluprobe {

inline constexpr const char* kTraceMagic = "HPRB1";
inline constexpr int kTraceFormatVersion = 1;

// Reads manifest.json plus the per-section binary32 blobs under `dir` and
// returns a fully validated set.
//
// Throws FormatError (missing or truncated blob, bad manifest),
// UnsupportedVersionError, or ValidationError.
TraceSet load_trace_set(const std::filesystem::path& dir);

// Format checks only: shapes and blob sizes are checked, data invariants are
// not. For tooling that reports every violation (see find_violations).
TraceSet read_trace_set(const std::filesystem::path& dir);

// Writes `set` to `dir` (created if needed). Output bytes depend only on the
// set contents. Throws IoError when the directory or files can't be written.
void write_trace_set(const TraceSet& set, const std::filesystem::path& dir);

}  // namespace haluprobe
