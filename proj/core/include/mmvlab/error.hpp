#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace mmvlab {

enum class ErrorCode {
  ConfigError,
  DimensionMismatch,
  Degenerate,
  ResourceLimit,
  NonFiniteState,
  NegativeRetention,
  PsiBelowMinusOne,
  LengthMismatch,
  QuadratureNonConvergence,
  RegressionIllConditioned,
  FloorViolation,
  SingularD,
  DomainError,
  DegenerateMarket,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::ResourceLimit: return "ResourceLimit";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NegativeRetention: return "NegativeRetention";
    case ErrorCode::PsiBelowMinusOne: return "PsiBelowMinusOne";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::QuadratureNonConvergence: return "QuadratureNonConvergence";
    case ErrorCode::RegressionIllConditioned: return "RegressionIllConditioned";
    case ErrorCode::FloorViolation: return "FloorViolation";
    case ErrorCode::SingularD: return "SingularD";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::DegenerateMarket: return "DegenerateMarket";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// the CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Config errors additionally name the offending field as a JSON pointer.
class ConfigError : public Error {
 public:
  ConfigError(std::string pointer, const std::string& what)
      : Error(ErrorCode::ConfigError, pointer + ": " + what), pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace mmvlab
