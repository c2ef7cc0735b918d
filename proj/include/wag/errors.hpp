#pragma once

#include <stdexcept>
#include <string>

namespace wag {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

class CalibrationFailed : public Error {
 public:
  using Error::Error;
};

/// Filter weights collapsed to zero; the run has diverged.
class Degenerate : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite.
class Divergence : public Error {
 public:
  Divergence(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file: bad version, truncated payload, checksum mismatch, ...
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace wag
