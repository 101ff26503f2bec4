#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmcl {

enum class Errc {
  ZeroVector,
  DimensionMismatch,
  NonPositiveTemperature,
  NonFiniteEvaluation,
  EmptyPositiveRow,
  InvalidArgument,
  NonFiniteGradient,
  InvalidConfig,
  NegativeRatio,
  RoundOutOfRange,
  StageFailure,
  MalformedHeader,
  DuplicateId,
  SchemaViolation,
  MissingTarget,
  EmptyCorpus,
  EmptyReport,
  IoFailure,
  InsufficientData,
  NonFiniteLoss,
  EmptyModes,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure in the library surfaces as this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace dmcl
