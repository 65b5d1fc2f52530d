#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kam {

enum class ErrorKind {
  ZeroAverageViolation,
  SmallDivisorUnderflow,
  Overflow,
  InvalidSigma,
  ResonantFrequency,
  DomainViolation,
  UnknownFamily,
  DegenerateEmbedding,
  SingularLambdaAverage,
  StepDiverged,
  BudgetExceeded,
  DriftViolation,
  DegreeOverflow,
  StagnationError,
  ApproximantExhausted,
  SmallnessFailed,
  LedgerViolation,
  ConvergenceStalled,
  IntegrationBlowup,
  ParseError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures that mean "the theorem's hypotheses do not hold as configured"
  /// rather than an internal fault.
  bool is_hypothesis_failure() const noexcept;

 private:
  ErrorKind kind_;
};

}  // namespace kam
