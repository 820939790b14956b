#include "logkw/error.hpp"

namespace logkw {

std::string_view module_of(Errc code) noexcept {
  switch (code) {
    case Errc::RhoOutOfRange:
    case Errc::NonPositiveParameter:
    case Errc::IntegrabilityViolation:
    case Errc::DecayRateNonPositive:
      return "model";
    case Errc::AllocationTooLarge:
      return "paths";
    case Errc::SingularDesignMatrix:
    case Errc::BasisRangeOverflow:
    case Errc::SingularSystem:
    case Errc::ShapeMismatch:
      return "kw";
    case Errc::EpsTooLarge:
    case Errc::TooManyViolations:
    case Errc::NonPositiveDensity:
    case Errc::GridTooSmall:
      return "bounds";
    case Errc::ConfigParseError:
    case Errc::IoError:
      return "cli";
  }
  return "unknown";
}

std::string_view name_of(Errc code) noexcept {
  switch (code) {
    case Errc::RhoOutOfRange: return "RhoOutOfRange";
    case Errc::NonPositiveParameter: return "NonPositiveParameter";
    case Errc::IntegrabilityViolation: return "IntegrabilityViolation";
    case Errc::DecayRateNonPositive: return "DecayRateNonPositive";
    case Errc::AllocationTooLarge: return "AllocationTooLarge";
    case Errc::SingularDesignMatrix: return "SingularDesignMatrix";
    case Errc::BasisRangeOverflow: return "BasisRangeOverflow";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EpsTooLarge: return "EpsTooLarge";
    case Errc::TooManyViolations: return "TooManyViolations";
    case Errc::NonPositiveDensity: return "NonPositiveDensity";
    case Errc::GridTooSmall: return "GridTooSmall";
    case Errc::ConfigParseError: return "ConfigParseError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(module_of(code)) + "." + std::string(name_of(code)) + ": " +
                         detail),
      code_(code) {}

std::string Error::qualified_code() const {
  return std::string(module_of(code_)) + "." + std::string(name_of(code_));
}

}  // namespace logkw
