#pragma once

#include "kerrbic/coupling.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace kerrbic {

/// A resonator tuned so that the loss minimum sits at omega0 = omega_a + delta0.
struct DesignPoint {
  double omega_a = 1.0;  ///< eV
  double beta = 0.0;
  double delta0 = 0.0;   ///< eV
  double kappa_i = 0.0;  ///< eV
  double c2 = 0.0;       ///< 1/eV, curvature of Re K_l about omega0
};

/// n0 = delta0 / (2 beta omega_a) + 1: the photon number whose transition frequency
/// omega_{n,n-1} lands on the loss minimum. Throws ConfigError when beta <= 0.
double stable_photon_number(const DesignPoint& p);

/// Inverse: delta0 = 2 beta omega_a (n0 - 1).
double detuning_for_fock(double n0, double omega_a, double beta);

/// The quadratic near-minimum loss described by the design point.
QuadraticLoss to_coupling(const DesignPoint& p);

struct LossCurve {
  std::vector<int> n;
  std::vector<double> kappa;  ///< eV
  int n_min = 1;
  double kappa_min = 0.0;
};

/// kappa(n) for n = 1..n_max.
LossCurve loss_curve(const CouplingModel& coupling, double omega_a, double beta, int n_max);
LossCurve loss_curve(const DesignPoint& p, int n_max);

enum class Regime { fock_capable, failed_fock, washed_out };

std::string regime_name(Regime r);

struct ClassifyThresholds {
  double integrality = 1e-3;
  double contrast = 1.0;
};

struct Classification {
  Regime regime = Regime::washed_out;
  double n0 = 0.0;
  /// C = 4 n0 sqrt(A / kappa_i), A = discrete curvature of kappa(n) at n0.
  /// Infinite when kappa_i = 0.
  double contrast = 0.0;
  /// Fano factor the quadratic trap can sustain against the background loss, 2 / (4 + C).
  double predicted_fano = 1.0;
};

/// A trap is useful when the curvature of kappa(n) over the width of the state dominates
/// the background loss: C >= threshold. Integral n0 then gives fock_capable, otherwise
/// failed_fock. Below the threshold the loss looks linear (washed_out).
Classification classify(const DesignPoint& p, const CouplingModel& coupling, const ClassifyThresholds& t = {});
Classification classify(const DesignPoint& p, const ClassifyThresholds& t = {});

void write_loss_curve_csv(std::ostream& out, const LossCurve& curve);
void write_design_sweep_header(std::ostream& out);
void write_design_sweep_row(std::ostream& out, const DesignPoint& p, const Classification& c);

}  // namespace kerrbic
