#include "tsm/error.hpp"

namespace tsm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::NegativeCapacity: return "NegativeCapacity";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::EmptyKinds: return "EmptyKinds";
    case ErrorCode::InvalidHorizon: return "InvalidHorizon";
    case ErrorCode::InfeasibleDemand: return "InfeasibleDemand";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::UnsupportedConstraints: return "UnsupportedConstraints";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::TooManyLeaves: return "TooManyLeaves";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MissingHour: return "MissingHour";
    case ErrorCode::DuplicateHour: return "DuplicateHour";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

}  // namespace tsm
