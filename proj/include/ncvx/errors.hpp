#pragma once

#include <stdexcept>
#include <string>

namespace ncvx {

enum class Errc {
  NonSymmetricInput,
  NonTracelessInput,
  SingularInput,
  DeterminantViolation,
  NonUnitDirector,
  InvalidParams,
  DimensionMismatch,
  IndexOutOfRange,
  DatumTooLarge,
  ValidationFailure,
  PreconditionViolation,
  NonPositiveDelta,
  TargetUnreachable,
  OutOfDomain,
  NonPositiveRadius,
  NotRankOne,
  EpsilonTooLarge,
  DegenerateLambda,
  SplitUnavailable,
  BudgetExhausted,
  StageRegression,
  UnrenderableDimension,
  ConfigError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::NonSymmetricInput: return "NonSymmetricInput";
    case Errc::NonTracelessInput: return "NonTracelessInput";
    case Errc::SingularInput: return "SingularInput";
    case Errc::DeterminantViolation: return "DeterminantViolation";
    case Errc::NonUnitDirector: return "NonUnitDirector";
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::DatumTooLarge: return "DatumTooLarge";
    case Errc::ValidationFailure: return "ValidationFailure";
    case Errc::PreconditionViolation: return "PreconditionViolation";
    case Errc::NonPositiveDelta: return "NonPositiveDelta";
    case Errc::TargetUnreachable: return "TargetUnreachable";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::NonPositiveRadius: return "NonPositiveRadius";
    case Errc::NotRankOne: return "NotRankOne";
    case Errc::EpsilonTooLarge: return "EpsilonTooLarge";
    case Errc::DegenerateLambda: return "DegenerateLambda";
    case Errc::SplitUnavailable: return "SplitUnavailable";
    case Errc::BudgetExhausted: return "BudgetExhausted";
    case Errc::StageRegression: return "StageRegression";
    case Errc::UnrenderableDimension: return "UnrenderableDimension";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ncvx
