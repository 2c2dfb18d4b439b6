#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace websed {

enum class ErrorKind {
  MissingFile,
  MalformedRow,
  UnknownLabel,
  ClassTooSmall,
  UnreadableFile,
  UnsupportedEncoding,
  InvalidConfig,
  InputTooShort,
  DegenerateStd,
  ShapeMismatch,
  EmptyTrainingSet,
  IncompatibleVersion,
  CorruptFile,
  FetcherUnavailable,
  MissingGroundTruth,
  GridMismatch,
  EmptyTestSet,
  NotEnoughEvaluators,
  UnknownAssignment,
  DuplicateVote,
  BadConfig,
  MissingInput,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::UnreadableFile: return "UnreadableFile";
    case ErrorKind::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InputTooShort: return "InputTooShort";
    case ErrorKind::DegenerateStd: return "DegenerateStd";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::IncompatibleVersion: return "IncompatibleVersion";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::FetcherUnavailable: return "FetcherUnavailable";
    case ErrorKind::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::NotEnoughEvaluators: return "NotEnoughEvaluators";
    case ErrorKind::UnknownAssignment: return "UnknownAssignment";
    case ErrorKind::DuplicateVote: return "DuplicateVote";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::MissingInput: return "MissingInput";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a kind that
/// callers (and the CLI exit-code mapping) can switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace websed
