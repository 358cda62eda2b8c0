#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace apsy {

enum class ErrorCode {
  DomainError,
  OutOfRange,
  InvalidArgument,
  NonConvergence,
  NonPositiveDefiniteHessian,
  DegenerateWeights,
  DegenerateFunctional,
  DegenerateVariance,
  AllIdentical,
  QuadratureFailure,
  GridTooCoarse,
  AlreadyPending,
  SessionStopped,
  NoPendingStimulus,
  SchemaVersionMismatch,
  CorruptFile,
  NotFound,
};

constexpr std::string_view to_string(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NonPositiveDefiniteHessian: return "NonPositiveDefiniteHessian";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::DegenerateFunctional: return "DegenerateFunctional";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::AllIdentical: return "AllIdentical";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::AlreadyPending: return "AlreadyPending";
    case ErrorCode::SessionStopped: return "SessionStopped";
    case ErrorCode::NoPendingStimulus: return "NoPendingStimulus";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI, HTTP layer) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const char* what) {
  if (!cond) fail(code, what);
}

}  // namespace apsy
