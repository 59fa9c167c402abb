#pragma once

#include <stdexcept>
#include <string>

namespace mcdban {

// Bad input: malformed files, out-of-range arguments, shape mismatches.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A computation produced NaN/Inf or otherwise failed numerically.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mcdban
