#pragma once

#include <stdexcept>
#include <string>

namespace event_net {

// Invalid input: bad dimensions, probabilities out of range, malformed config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed-point solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual, long iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  long iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  long iterations_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant; never expected when inputs validate.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace event_net
