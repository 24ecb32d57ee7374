#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sbfd {

enum class ErrorKind {
  NonStochasticMatrix,
  NegativeRate,
  EmptyChain,
  NoConvergence,
  DegenerateRange,
  TraceTooShort,
  ShapeMismatch,
  UninitializedGradient,
  EmptyPartition,
  InsufficientHistory,
  NotMultipleOfHorizon,
  NegativeQueue,
  EpisodeFinished,
  BufferTooSmall,
  CheckpointVersionMismatch,
  InsufficientTrace,
  InvalidConfig,
  InvalidArgument,
  IoFailure,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonStochasticMatrix: return "NonStochasticMatrix";
    case ErrorKind::NegativeRate: return "NegativeRate";
    case ErrorKind::EmptyChain: return "EmptyChain";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::TraceTooShort: return "TraceTooShort";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UninitializedGradient: return "UninitializedGradient";
    case ErrorKind::EmptyPartition: return "EmptyPartition";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::NotMultipleOfHorizon: return "NotMultipleOfHorizon";
    case ErrorKind::NegativeQueue: return "NegativeQueue";
    case ErrorKind::EpisodeFinished: return "EpisodeFinished";
    case ErrorKind::BufferTooSmall: return "BufferTooSmall";
    case ErrorKind::CheckpointVersionMismatch: return "CheckpointVersionMismatch";
    case ErrorKind::InsufficientTrace: return "InsufficientTrace";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

// Single exception type for the whole library; callers switch on kind().
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

}  // namespace sbfd
