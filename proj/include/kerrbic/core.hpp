#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace kerrbic {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// State of the resonator on the truncated Fock basis |0>..|dim-1>.
using DensityMatrix = Eigen::MatrixXcd;

namespace units {

/// hbar in eV*fs. Internal time is measured in hbar/eV, so that every rate or
/// frequency in eV multiplies an internal time directly.
inline constexpr double hbar_eV_fs = 0.6582119569;

constexpr double fs_to_internal(double t_fs) { return t_fs / hbar_eV_fs; }
constexpr double internal_to_fs(double t) { return t * hbar_eV_fs; }

}  // namespace units

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Index or dimension outside the truncated basis.
struct DimensionError : Error {
  using Error::Error;
};

/// The basis is too small for the requested state; required_dim says how big it must be.
struct TruncationError : Error {
  TruncationError(const std::string& what, int required)
      : Error(what), required_dim(required) {}
  int required_dim;
};

struct UnsupportedModelError : Error {
  using Error::Error;
};

/// Observable has no value for this state (e.g. g2 of the vacuum).
struct UndefinedObservableError : Error {
  using Error::Error;
};

/// Numerical result outside its accuracy budget.
struct AccuracyError : Error {
  using Error::Error;
};

/// Adaptive stepper gave up (step-size underflow or non-finite state).
struct IntegratorError : Error {
  using Error::Error;
};

/// Invalid physical configuration (bad parameter combination, malformed input file).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace kerrbic
