#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace confslate {

enum class ErrorCode {
  InvalidEnvironment,
  OutOfOrderCommand,
  InvalidCommand,
  InvalidDifferential,
  InvalidConfidence,
  InvalidProbability,
  InvalidDistribution,
  EmptyDataset,
  Unachievable,
  InsufficientData,
  ProtocolViolation,
  SeqGap,
  CorruptLog,
  EmptyInput,
  SchemaError,
  ValidationError,
  IoError,
  NotFound,
  Conflict,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a machine-readable code so the
// CLI and the service can map it to exit codes / wire errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace confslate
