#pragma once

#include <stdexcept>
#include <string>

namespace heatlab {

// Every failure raised by the library derives from Error so callers can
// catch the family in one place; the harness maps families to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid grid, sigma or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Query that does not land on a grid node.
class PrecisionError : public Error {
 public:
  using Error::Error;
};

// Coupled quantities computed from different noise realizations.
class CouplingError : public Error {
 public:
  using Error::Error;
};

// Inconsistent arguments (wrong direction, mixed record families, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Geometric object outside the configured window.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Requested (set kind, index) combination is not supported.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Work or memory budget exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

}  // namespace heatlab
