#pragma once

#include <stdexcept>
#include <string>

namespace warpex {

// Bad input: malformed configs, inconsistent dimensions, violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical breakdown: failed factorizations, divergence, non-convergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace warpex
