#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mbcpp {

using Vec  = Eigen::VectorXd;
using Mat  = Eigen::MatrixXd;
using VecI = Eigen::VectorXi;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double speed_of_light = 299792458.0;  // m/s

/// Inconsistent or out-of-range configuration input.  CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geometry leaves a requested quantity undefined (coincident nodes, rank loss).
class GeometryError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// The assignment/mode combination cannot separate the unknowns.
class IdentifiabilityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Numerical failure inside an otherwise valid computation.  CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mbcpp
