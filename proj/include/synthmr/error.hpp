#pragma once

#include <stdexcept>
#include <string>

namespace synthmr {

// Bad input data: malformed files, shape mismatches, invalid volumes.
// The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied parameters that violate a documented precondition.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace synthmr
