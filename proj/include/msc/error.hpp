#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msc {

enum class ErrorKind {
  DegenerateVector,
  DimensionMismatch,
  EmptyTrainingSet,
  ParseError,
  InvariantViolation,
  IoError,
  PolicyMismatch,
  BatchTooSmall,
  NonFiniteUpdate,
  KOutOfRange,
  SingleClassLabels,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DegenerateVector: return "DegenerateVector";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::PolicyMismatch: return "PolicyMismatch";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorKind::KOutOfRange: return "KOutOfRange";
    case ErrorKind::SingleClassLabels: return "SingleClassLabels";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Domain error raised by every module. The kind is machine-checkable; the
/// message names the violated invariant.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace msc
