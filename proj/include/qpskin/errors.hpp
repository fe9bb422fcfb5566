#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qpskin {

// Invalid model, noise or run parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A parameter combination that is legal but outside the validity range of an
// approximation (e.g. telegraph flips with gamma*dt >= 0.1).
class ApproximationError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

// Caller broke a documented precondition on data (not on parameters).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite amplitudes during time stepping.
class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, std::size_t step)
      : NumericalError(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// A fit window that contains too few usable points.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qpskin
