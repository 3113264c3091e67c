#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace haluprobe {

// Base of every error raised by the library. The CLI maps subclasses to
// process exit codes, so each class stands for one failure category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated file content.
class FormatError : public Error {
 public:
  FormatError(const std::string& file, std::uint64_t offset,
              const std::string& what)
      : Error(file + " @" + std::to_string(offset) + ": " + what),
        file_(file),
        offset_(offset) {}

  const std::string& file() const { return file_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::string file_;
  std::uint64_t offset_;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

// A data invariant does not hold. `rule` is a short stable identifier
// (e.g. "attention_simplex") that tests and tooling can match on.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& trace_id, const std::string& rule,
                  const std::string& detail)
      : Error("trace '" + trace_id + "' violates " + rule + ": " + detail),
        trace_id_(trace_id),
        rule_(rule) {}

  const std::string& trace_id() const { return trace_id_; }
  const std::string& rule() const { return rule_; }

 private:
  std::string trace_id_;
  std::string rule_;
};

class MissingSectionError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

// Training cannot proceed with the given data (single class, unlabeled rows).
class TrainingError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public TrainingError {
 public:
  DivergenceError(int epoch, const std::string& what)
      : TrainingError("diverged at epoch " + std::to_string(epoch) + ": " +
                      what),
        epoch_(epoch) {}

  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class ModelFormatError : public Error {
 public:
  using Error::Error;
};

// Most-derived library class name of `e` ("FormatError", ...), or "error"
// for anything else.
std::string_view error_class_name(const std::exception& e);

// "<class>: <what>"
std::string describe_error(const std::exception& e);

}  // namespace haluprobe
