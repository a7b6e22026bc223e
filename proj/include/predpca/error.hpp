#pragma once

#include <stdexcept>
#include <string>

namespace predpca {

/// Input that violates a documented precondition. The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (singular systems, non-convergence). CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the L1 penalty zeroes every loading entry.
class FullyThresholdedError : public NumericalError {
 public:
  FullyThresholdedError() : NumericalError("fully thresholded component") {}
  explicit FullyThresholdedError(int component)
      : NumericalError("fully thresholded component " + std::to_string(component)), component_(component) {}

  int component() const { return component_; }  // 1-based, 0 when unknown

 private:
  int component_ = 0;
};

}  // namespace predpca
