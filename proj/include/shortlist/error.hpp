#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shortlist {

enum class ErrorCode {
  DimensionMismatch,
  DuplicateId,
  ZeroVector,
  MalformedRecord,
  UnknownId,
  UnresolvableId,
  EmptyCorpus,
  EmptyBatch,
  EmptyPool,
  EmptyGrid,
  EmptyPositives,
  EmptyGroup,
  InsufficientNegatives,
  MissingJudgment,
  InvalidSpec,
  NonFiniteGradient,
  NonFiniteLoss,
  NormCollapse,
  ZeroVariance,
  ConfigInvalid,
  MissingPrerequisite,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::UnresolvableId: return "UnresolvableId";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::EmptyPositives: return "EmptyPositives";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::InsufficientNegatives: return "InsufficientNegatives";
    case ErrorCode::MissingJudgment: return "MissingJudgment";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NormCollapse: return "NormCollapse";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MissingPrerequisite: return "MissingPrerequisite";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `context` carries the offending
/// id, path or line so the CLI can forward it in its error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string context = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message),
        context_(std::move(context)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& context() const noexcept { return context_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::string context_;
};

}  // namespace shortlist
