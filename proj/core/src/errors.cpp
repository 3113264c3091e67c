#include "haluprobe/errors.h"

namespace haluprobe {

std::string_view error_class_name(const std::exception& e) {
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const UnsupportedVersionError*>(&e)) {
    return "UnsupportedVersionError";
  }
  if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const MissingSectionError*>(&e)) return "MissingSectionError";
  if (dynamic_cast<const BoundsError*>(&e)) return "BoundsError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const LayoutError*>(&e)) return "LayoutError";
  // Before its base class.
  if (dynamic_cast<const DivergenceError*>(&e)) return "DivergenceError";
  if (dynamic_cast<const TrainingError*>(&e)) return "TrainingError";
  if (dynamic_cast<const ModelFormatError*>(&e)) return "ModelFormatError";
  return "error";
}

std::string describe_error(const std::exception& e) {
  return std::string(error_class_name(e)) + ": " + e.what();
}

}  // namespace haluprobe
