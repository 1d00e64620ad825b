#pragma once

#include "kerrbic/core.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace kerrbic {

// Frequency-dependent coupling between the resonator and its radiation continuum.
// All rates and frequencies are in eV (energy / hbar).

/// Markovian limit: K_c = sqrt(2 kappa), K_l = kappa.
struct ConstantCoupling {
  double kappa = 0.0;
};

/// Resonator beside a waveguide closed by a mirror: the direct leakage path
/// interferes with the mirror round trip, K_c = sqrt(2k)(1 - e^{i(w/gamma + theta)}).
struct TerminatedWaveguide {
  double kappa = 0.0;
  double gamma = 1.0;  ///< inverse round-trip time
  double theta = 0.0;
  double kappa_i = 0.0;
};

/// High-Q mode leaking through a low-Q neighbour at omega_d:
/// K_c = sqrt(2k)(w - w_d)/(w - w_d + i gamma), zero at omega_d.
struct FanoTwoResonator {
  double kappa = 0.0;
  double gamma = 1.0;
  double omega_d = 0.0;
  double kappa_i = 0.0;
};

/// Near-BIC expansion Re K_l = kappa_i + c2 (w - omega0)^2, Im K_l = 0.
struct QuadraticLoss {
  double omega0 = 0.0;
  double c2 = 0.0;  ///< 1/eV
  double kappa_i = 0.0;
};

/// Sampled |K_c(w)|^2, linearly interpolated and zero outside the table.
struct TabulatedCoupling {
  std::vector<double> omega;
  std::vector<double> kc2;
  double kappa_i = 0.0;
};

using CouplingModel =
    std::variant<ConstantCoupling, TerminatedWaveguide, FanoTwoResonator, QuadraticLoss, TabulatedCoupling>;

/// Uniform integration grid for the principal-value integral.
struct FrequencyGrid {
  double omega_min = 0.0;
  double omega_max = 0.0;
  int count = 0;
  double eta = 0.0;  ///< 0 selects 1e-3 x spacing

  double spacing() const { return (omega_max - omega_min) / (count - 1); }
  double effective_eta() const { return eta > 0.0 ? eta : 1e-3 * spacing(); }
  void check() const;
};

/// omega_{n,n-1} = omega_a (1 + 2 beta (n-1)): energy released when the n-th photon leaves.
constexpr double transition_frequency(double omega_a, double beta, double n) {
  return omega_a * (1.0 + 2.0 * beta * (n - 1.0));
}

Complex k_c(const CouplingModel& model, double omega);

/// |K_c(w)|^2 (the spectral weight entering the loss function).
double k_c_squared(const CouplingModel& model, double omega);

/// Background loss kappa_i of the model (0 for the Markovian model).
double background_loss(const CouplingModel& model);

/// Re K_l(w) = |K_c(w)|^2 / 2 + kappa_i, or the quadratic expansion.
double re_k_l(const CouplingModel& model, double omega);

/// Loss function evaluated from the Kramers-Kronig integral on a fixed grid.
/// Samples of |K_c|^2 are cached, so repeated evaluation costs one pass over the grid.
class LossFunction {
 public:
  LossFunction(CouplingModel model, FrequencyGrid grid);

  /// Full complex K_l(w). Throws AccuracyError when the quadrature error
  /// estimate exceeds 1e-3 relative.
  Complex operator()(double omega) const;

  /// Same integral without the accuracy check; error_estimate receives the
  /// estimated absolute quadrature error when non-null.
  Complex evaluate(double omega, double* error_estimate = nullptr) const;

  const FrequencyGrid& grid() const { return grid_; }

 private:
  Complex extrapolated(double omega, double eta, int stride) const;

  CouplingModel model_;
  FrequencyGrid grid_;
  std::vector<double> samples_;  // |K_c|^2 minus the asymptotic level
  double level_ = 0.0;           // asymptotic mean of |K_c|^2, handled analytically
  double scale_ = 0.0;           // max |K_c|^2 / 2 on the grid
};

/// Integration grid wide and fine enough for the model around omega.
FrequencyGrid default_grid(const CouplingModel& model, double omega);

/// Constant and QuadraticLoss models are closed-form; all others go through the
/// numerical Kramers-Kronig integral on grid.
Complex k_l(const CouplingModel& model, double omega, const FrequencyGrid& grid);
Complex k_l(const CouplingModel& model, double omega);

/// Q(w) = w / (2 Re K_l(w)); +infinity when Re K_l vanishes.
double q_factor(const CouplingModel& model, double omega);

/// kappa(n) = Re K_l(omega_{n,n-1}). The population of |n> decays at 2 n kappa(n).
double kappa_of_n(const CouplingModel& model, double omega_a, double beta, double n);

/// True when Im K_l is identically zero for this model.
bool has_trivial_lamb_shift(const CouplingModel& model);

/// Reads a two-column file "omega_eV kc2_eV" with the header line
/// "# omega_eV kc2_eV" and strictly increasing omega.
TabulatedCoupling load_tabulated(const std::string& path, double kappa_i = 0.0);

std::string model_name(const CouplingModel& model);

}  // namespace kerrbic
