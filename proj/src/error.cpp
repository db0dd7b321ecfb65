#include "cdrop/error.hpp"

namespace cdrop {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::NoSolution: return "NoSolution";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::EventCapExceeded: return "EventCapExceeded";
    case ErrorCode::OutOfHorizon: return "OutOfHorizon";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::TapeMismatch: return "TapeMismatch";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace cdrop
