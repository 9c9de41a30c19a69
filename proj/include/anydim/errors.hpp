#pragma once

#include <stdexcept>
#include <string>

namespace anydim {

// Raised when an operation would materialize an object past its configured
// size cap; callers treat it as "this level is infeasible".
class DimensionOverflowError : public std::runtime_error {
 public:
  explicit DimensionOverflowError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid user-facing input: malformed expressions, bad configs, violated
// preconditions that a caller can fix.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical procedure failed to meet its contract (non-convergence,
// inconsistent extension system, NaN loss).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace anydim
