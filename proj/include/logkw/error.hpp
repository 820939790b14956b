#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace logkw {

/// Failure codes, grouped by the module that raises them.
enum class Errc {
  // model
  RhoOutOfRange,
  NonPositiveParameter,
  IntegrabilityViolation,
  DecayRateNonPositive,
  // paths
  AllocationTooLarge,
  // kw
  SingularDesignMatrix,
  BasisRangeOverflow,
  SingularSystem,
  ShapeMismatch,
  // bounds
  EpsTooLarge,
  TooManyViolations,
  NonPositiveDensity,
  GridTooSmall,
  // cli
  ConfigParseError,
  IoError,
};

std::string_view module_of(Errc code) noexcept;
std::string_view name_of(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }
  /// e.g. "model.RhoOutOfRange"
  std::string qualified_code() const;

 private:
  Errc code_;
};

}  // namespace logkw
