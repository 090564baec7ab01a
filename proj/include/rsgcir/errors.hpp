#ifndef RSGCIR_ERRORS_HPP
#define RSGCIR_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsgcir {

enum class ErrorCode {
  InvalidArgument,
  // affine_core
  NonPositiveQKappa,
  DegenerateInversion,
  InconsistentPair,
  ComplexGamma,
  SingularDenominator,
  // regimes
  InvalidGenerator,
  ReducibleChain,
  // ratings
  EmptyRow,
  EmptyBucket,
  DegenerateRow,
  OptimizerFailure,
  NoRealLogarithm,
  NegativeDeltaNu,
  DefectiveMatrix,
  ComplexSpectrum,
  NegativeModeWeight,
  // pricing
  DimensionMismatch,
  NonPositivePrice,
  ZeroWeightMass,
  // filters
  CholeskyFailure,
  SingularInnovationCov,
  ZeroMixtureLikelihood,
  // estimation
  NonFiniteLikelihood,
  MaxIterations,
  SingularHessian,
  TooFewSuccessfulReplicates,
  // diagnostics
  DegenerateComponent,
  AbsorbingState,
  // io
  SchemaError,
  NonWeeklyGrid,
  MaturityMismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonPositiveQKappa: return "NonPositiveQKappa";
    case ErrorCode::DegenerateInversion: return "DegenerateInversion";
    case ErrorCode::InconsistentPair: return "InconsistentPair";
    case ErrorCode::ComplexGamma: return "ComplexGamma";
    case ErrorCode::SingularDenominator: return "SingularDenominator";
    case ErrorCode::InvalidGenerator: return "InvalidGenerator";
    case ErrorCode::ReducibleChain: return "ReducibleChain";
    case ErrorCode::EmptyRow: return "EmptyRow";
    case ErrorCode::EmptyBucket: return "EmptyBucket";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::OptimizerFailure: return "OptimizerFailure";
    case ErrorCode::NoRealLogarithm: return "NoRealLogarithm";
    case ErrorCode::NegativeDeltaNu: return "NegativeDeltaNu";
    case ErrorCode::DefectiveMatrix: return "DefectiveMatrix";
    case ErrorCode::ComplexSpectrum: return "ComplexSpectrum";
    case ErrorCode::NegativeModeWeight: return "NegativeModeWeight";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositivePrice: return "NonPositivePrice";
    case ErrorCode::ZeroWeightMass: return "ZeroWeightMass";
    case ErrorCode::CholeskyFailure: return "CholeskyFailure";
    case ErrorCode::SingularInnovationCov: return "SingularInnovationCov";
    case ErrorCode::ZeroMixtureLikelihood: return "ZeroMixtureLikelihood";
    case ErrorCode::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::TooFewSuccessfulReplicates: return "TooFewSuccessfulReplicates";
    case ErrorCode::DegenerateComponent: return "DegenerateComponent";
    case ErrorCode::AbsorbingState: return "AbsorbingState";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::NonWeeklyGrid: return "NonWeeklyGrid";
    case ErrorCode::MaturityMismatch: return "MaturityMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define RSGCIR_REQUIRE(cond, code, msg)                 \
  do {                                                  \
    if (!(cond)) throw ::rsgcir::Error((code), (msg));  \
  } while (false)

}  // namespace rsgcir

#endif  // RSGCIR_ERRORS_HPP
