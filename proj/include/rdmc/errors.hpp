// ============================================================================
// errors.hpp -- exception hierarchy shared by all rdmc modules
// ============================================================================
#pragma once
#include <stdexcept>
#include <string>

namespace rdmc {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Grid / field construction
struct NonPositiveExtent : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct LocationOutsideGrid : Error { using Error::Error; };
struct GridMismatch : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct NonFiniteField : Error { using Error::Error; };
struct NegativeConcentration : Error { using Error::Error; };

// Series solver
struct MissingPriorOrder : Error { using Error::Error; };
struct OrderUnavailable : Error { using Error::Error; };
struct ConvergenceRadiusExceeded : Error { using Error::Error; };
struct SubintervalTooCoarse : Error { using Error::Error; };

// FDM
struct UnstableConfiguration : Error { using Error::Error; };
struct NegativeBlowup : Error { using Error::Error; };

// Detection
struct DegenerateMeans : Error { using Error::Error; };
struct NonPositiveMean : Error { using Error::Error; };
struct EmptyHypothesisSet : Error { using Error::Error; };

// Modulation
struct TimeOutsideSlot : Error { using Error::Error; };

// Scenario / CLI
struct ConfigParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };

} // namespace rdmc
