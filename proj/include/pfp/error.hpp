#pragma once

#include <stdexcept>
#include <string>

namespace pfp {

// Root of every error the engine raises. Callers that only care about
// "something was wrong with the inputs" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A tensor arrived in the wrong spread representation for an operator.
class WrongSpreadKind : public Error {
 public:
  using Error::Error;
};

// Second raw moment smaller than mean^2 beyond the rounding band.
class CorruptMoments : public Error {
 public:
  using Error::Error;
};

// Layer chain violates the compute/activation I/O conventions.
class ConventionMismatch : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NegativeVariance : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// On-disk container problems.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersion : public FormatError {
 public:
  using FormatError::FormatError;
};

class ManifestError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedDtype : public FormatError {
 public:
  using FormatError::FormatError;
};

class LengthMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace pfp
