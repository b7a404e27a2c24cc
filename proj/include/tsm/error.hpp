#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsm {

enum class ErrorCode {
  DuplicateName,
  DanglingReference,
  NegativeCapacity,
  InvalidBounds,
  EmptyKinds,
  InvalidHorizon,
  InfeasibleDemand,
  Infeasible,
  Unbounded,
  NumericalFailure,
  UnsupportedConstraints,
  UnknownNode,
  TooManyLeaves,
  InvalidParams,
  MalformedRow,
  MissingHour,
  DuplicateHour,
  InvalidConfig,
  Usage,
};

std::string_view to_string(ErrorCode code);

/// Domain error carrying a machine-readable code. All library failures
/// that are part of an operation's contract are reported this way.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tsm
