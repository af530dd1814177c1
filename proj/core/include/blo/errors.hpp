#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace blo {

/// Bad argument to a library entry point (zero batch size, negative truncation, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value. `step` is the inner or outer step at which it
/// was detected (or -1 when no step applies) and `norm` the offending iterate norm.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step = -1, double norm = 0.0)
      : std::runtime_error(what), step_(step), norm_(norm) {}

  long step() const noexcept { return step_; }
  double norm() const noexcept { return norm_; }

 private:
  long step_;
  double norm_;
};

/// Requested a derivative oracle from a problem that only exposes black-box evaluation.
class NotDifferentiable : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Dense Jacobian oracle refused because M*N exceeds the configured cap.
class OracleTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stored trajectory does not replay bit-exactly.
class ReplayMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Neumann iterate grew past the divergence guard; the step size is too large.
class NeumannDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration failed validation. `key` names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(key) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace blo
