#pragma once

#include <stdexcept>
#include <string>

namespace ocorg {

/// Argument outside the domain where a model or formula is defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A reference, initialization or governor query has no admissible answer.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The closed loop left the safe set even though it was inside at the
/// previous step. Indicates a bug or a mis-calibrated set.
class InvarianceViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class StabilityEstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the cost accessor when an algorithm reads a cost that has not
/// been revealed yet.
class CausalityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ocorg
