#pragma once

#include <stdexcept>
#include <string>

namespace opal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or precondition violation (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (CLI exit code 2).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A numerical contract was violated, e.g. an accumulator would overflow
/// (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

enum class LoadErrorKind { kBadMagic, kBadVersion, kBadDtype, kBadHeader, kTruncated, kNonFinite };

const char* to_string(LoadErrorKind kind);

/// Malformed tensor / quantized-tensor file. Treated as an I/O error by the CLI.
class LoadError : public IoError {
 public:
  LoadError(LoadErrorKind kind, const std::string& what)
      : IoError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  LoadErrorKind kind() const noexcept { return kind_; }

 private:
  LoadErrorKind kind_;
};

}  // namespace opal
