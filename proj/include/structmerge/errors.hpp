#pragma once

#include <stdexcept>
#include <string>

namespace structmerge {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct DivisibilityError : Error { using Error::Error; };
struct RateError : Error { using Error::Error; };
struct BoxError : Error { using Error::Error; };
struct EmptyMaskError : Error { using Error::Error; };
struct PartitionError : Error { using Error::Error; };
struct ZeroNormError : Error { using Error::Error; };
struct AsymmetryError : Error { using Error::Error; };
struct LengthError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct SeparabilityError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace structmerge
