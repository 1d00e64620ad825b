#include "kerrbic/design.hpp"

#include "kerrbic/csv.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace kerrbic {

double stable_photon_number(const DesignPoint& p) {
  if (!(p.beta > 0.0)) throw ConfigError("stable_photon_number: beta must be positive, a linear resonator has no BIC order");
  if (!(p.omega_a > 0.0)) throw ConfigError("stable_photon_number: omega_a must be positive");
  return p.delta0 / (2.0 * p.beta * p.omega_a) + 1.0;
}

double detuning_for_fock(double n0, double omega_a, double beta) {
  if (!(beta > 0.0)) throw ConfigError("detuning_for_fock: beta must be positive");
  return 2.0 * beta * omega_a * (n0 - 1.0);
}

QuadraticLoss to_coupling(const DesignPoint& p) { return QuadraticLoss{p.omega_a + p.delta0, p.c2, p.kappa_i}; }

LossCurve loss_curve(const CouplingModel& coupling, double omega_a, double beta, int n_max) {
  if (n_max < 1) throw ConfigError("loss_curve: n_max must be at least 1");
  LossCurve c;
  c.kappa_min = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= n_max; ++n) {
    const double k = kappa_of_n(coupling, omega_a, beta, n);
    c.n.push_back(n);
    c.kappa.push_back(k);
    if (k < c.kappa_min) {
      c.kappa_min = k;
      c.n_min = n;
    }
  }
  return c;
}

LossCurve loss_curve(const DesignPoint& p, int n_max) { return loss_curve(to_coupling(p), p.omega_a, p.beta, n_max); }

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::fock_capable: return "fock_capable";
    case Regime::failed_fock: return "failed_fock";
    case Regime::washed_out: return "washed_out";
  }
  return "unknown";
}

Classification classify(const DesignPoint& p, const CouplingModel& coupling, const ClassifyThresholds& t) {
  Classification c;
  c.n0 = stable_photon_number(p);
  if (c.n0 < 1.0) {
    // The minimum lies below the one-photon transition: nothing can be trapped.
    c.regime = Regime::washed_out;
    return c;
  }
  const auto kappa = [&](double n) { return kappa_of_n(coupling, p.omega_a, p.beta, n); };
  const double curvature = 0.5 * (kappa(c.n0 + 1.0) + kappa(c.n0 - 1.0)) - kappa(c.n0);
  const double background = background_loss(coupling);
  if (curvature <= 0.0)
    c.contrast = 0.0;
  else if (background <= 0.0)
    c.contrast = std::numeric_limits<double>::infinity();
  else
    c.contrast = 4.0 * c.n0 * std::sqrt(curvature / background);
  c.predicted_fano = std::isinf(c.contrast) ? 0.0 : 2.0 / (4.0 + c.contrast);
  if (c.contrast < t.contrast)
    c.regime = Regime::washed_out;
  else if (std::abs(c.n0 - std::round(c.n0)) < t.integrality)
    c.regime = Regime::fock_capable;
  else
    c.regime = Regime::failed_fock;
  return c;
}

Classification classify(const DesignPoint& p, const ClassifyThresholds& t) { return classify(p, to_coupling(p), t); }

void write_loss_curve_csv(std::ostream& out, const LossCurve& curve) {
  out << "n,kappa_eV\n";
  for (std::size_t i = 0; i < curve.n.size(); ++i) out << curve.n[i] << ',' << fmt_num(curve.kappa[i]) << '\n';
}

void write_design_sweep_header(std::ostream& out) { out << "beta,delta0_over_wa,kappa_i_over_wa,n0,class\n"; }

void write_design_sweep_row(std::ostream& out, const DesignPoint& p, const Classification& c) {
  out << fmt_num(p.beta) << ',' << fmt_num(p.delta0 / p.omega_a) << ',' << fmt_num(p.kappa_i / p.omega_a) << ','
      << fmt_num(c.n0) << ',' << regime_name(c.regime) << '\n';
}

}  // namespace kerrbic
