// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>

namespace immgp {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input shape or value problems.
struct DimensionMismatch : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };
struct NonPositiveParameter : Error { using Error::Error; };
struct NonPositiveVariance : Error { using Error::Error; };
struct DofTooSmall : Error { using Error::Error; };
struct BadSplit : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };

// Numerical failures, e.g. a covariance that stays indefinite after jitter.
struct NumericalError : Error { using Error::Error; };
struct NotPositiveDefinite : NumericalError { using NumericalError::NumericalError; };

// Persistence.
struct IoError : Error { using Error::Error; };
struct ParseError : IoError { using IoError::IoError; };
struct SchemaMismatch : IoError { using IoError::IoError; };
struct LengthMismatch : IoError { using IoError::IoError; };

}  // namespace immgp
