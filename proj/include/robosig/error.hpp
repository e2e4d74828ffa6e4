#pragma once

#include <stdexcept>
#include <string>

namespace robosig {

/// Raised when a caller breaks an operation's precondition (shape mismatch,
/// wrong parameter role, out-of-range argument).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a training loop produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Raised for missing or malformed checkpoint, config and metrics files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace robosig
