#pragma once

#include <stdexcept>
#include <string>

namespace emotalk {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An id or index outside its configured range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A sequence too short for the requested operation.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Two sequences or matrices whose shapes must agree do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A sampler could not find any valid candidate.
class ExhaustedError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (dimensions, masks, rig size).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file contents, including checkpoint versions.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace emotalk
