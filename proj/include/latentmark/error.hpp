#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latentmark {

enum class ErrorKind {
  kInvalidArgument,
  kShapeMismatch,
  kCapacity,
  kEnhancementExhausted,
  kIo,
  kBadMagic,
  kTruncated,
  kDimensionOverflow,
  kConfig,
  kSingleClass,
  kTrainingDiverged,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kShapeMismatch: return "shape_mismatch";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kEnhancementExhausted: return "enhancement_exhausted";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kBadMagic: return "bad_magic";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kDimensionOverflow: return "dimension_overflow";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kSingleClass: return "single_class";
    case ErrorKind::kTrainingDiverged: return "training_diverged";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace latentmark
