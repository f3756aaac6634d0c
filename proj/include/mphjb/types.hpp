#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mphjb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Invalid problem or solver configuration (bad dimensions, non-integral T/h,
/// malformed config files). Maps to CLI exit code 2.
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Call-site misuse of an otherwise valid object (empty form list, off-grid
/// time, zero factor column). Also exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation that cannot produce a trustworthy number: indefinite
/// matrices, singular generators, quadrature that does not converge,
/// rank-deficient regressions. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw ConfigurationError(std::string(what) + ": dimension mismatch (got " +
                             std::to_string(got) + ", expected " +
                             std::to_string(want) + ")");
  }
}

}  // namespace mphjb
