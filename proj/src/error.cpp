#include "confslate/error.hpp"

namespace confslate {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidEnvironment: return "InvalidEnvironment";
    case ErrorCode::OutOfOrderCommand: return "OutOfOrderCommand";
    case ErrorCode::InvalidCommand: return "InvalidCommand";
    case ErrorCode::InvalidDifferential: return "InvalidDifferential";
    case ErrorCode::InvalidConfidence: return "InvalidConfidence";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::Unachievable: return "Unachievable";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::SeqGap: return "SeqGap";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
  }
  return "Unknown";
}

}  // namespace confslate
