#pragma once

#include <stdexcept>
#include <string>

namespace spde {

// Bad input: wrong dimensions, parameters out of range, malformed config.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation that could not deliver: divergent quadrature, failed
// factorization, non-convergent series, too many NaN trajectories.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace spde
