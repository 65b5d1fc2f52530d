#include "kamtori/errors.hpp"

namespace kam {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroAverageViolation: return "ZeroAverageViolation";
    case ErrorKind::SmallDivisorUnderflow: return "SmallDivisorUnderflow";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::InvalidSigma: return "InvalidSigma";
    case ErrorKind::ResonantFrequency: return "ResonantFrequency";
    case ErrorKind::DomainViolation: return "DomainViolation";
    case ErrorKind::UnknownFamily: return "UnknownFamily";
    case ErrorKind::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorKind::SingularLambdaAverage: return "SingularLambdaAverage";
    case ErrorKind::StepDiverged: return "StepDiverged";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::DriftViolation: return "DriftViolation";
    case ErrorKind::DegreeOverflow: return "DegreeOverflow";
    case ErrorKind::StagnationError: return "StagnationError";
    case ErrorKind::ApproximantExhausted: return "ApproximantExhausted";
    case ErrorKind::SmallnessFailed: return "SmallnessFailed";
    case ErrorKind::LedgerViolation: return "LedgerViolation";
    case ErrorKind::ConvergenceStalled: return "ConvergenceStalled";
    case ErrorKind::IntegrationBlowup: return "IntegrationBlowup";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

bool Error::is_hypothesis_failure() const noexcept {
  switch (kind_) {
    case ErrorKind::InvalidSigma:
    case ErrorKind::ResonantFrequency:
    case ErrorKind::SmallnessFailed:
    case ErrorKind::DegenerateEmbedding:
    case ErrorKind::SingularLambdaAverage:
    case ErrorKind::SmallDivisorUnderflow:
    case ErrorKind::LedgerViolation:
    case ErrorKind::ApproximantExhausted:
    case ErrorKind::DriftViolation:
      return true;
    default:
      return false;
  }
}

}  // namespace kam
