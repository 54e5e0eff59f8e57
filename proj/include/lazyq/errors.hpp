#pragma once

#include <stdexcept>
#include <string>

namespace lazyq {

/// Failure categories surfaced by the library. Each value names the violated
/// precondition or invariant; the carried message adds context.
enum class ErrorKind {
  NotHermitian,
  TraceNotOne,
  NotPositive,
  DimensionMismatch,
  TooManyNodes,
  NonFiniteNode,
  ContourTooTight,
  OutOfRange,
  NotFullRange,
  NoConvergence,
  SpreadTooLarge,
  EmptyBatch,
  SourceMismatch,
  TargetUnattainable,
  ScalarObservable,
  ParseError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotHermitian: return "NotHermitian";
    case ErrorKind::TraceNotOne: return "TraceNotOne";
    case ErrorKind::NotPositive: return "NotPositive";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooManyNodes: return "TooManyNodes";
    case ErrorKind::NonFiniteNode: return "NonFiniteNode";
    case ErrorKind::ContourTooTight: return "ContourTooTight";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::NotFullRange: return "NotFullRange";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SpreadTooLarge: return "SpreadTooLarge";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::SourceMismatch: return "SourceMismatch";
    case ErrorKind::TargetUnattainable: return "TargetUnattainable";
    case ErrorKind::ScalarObservable: return "ScalarObservable";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lazyq
