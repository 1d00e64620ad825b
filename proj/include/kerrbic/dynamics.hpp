#pragma once

#include "kerrbic/coupling.hpp"
#include "kerrbic/core.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kerrbic {

enum class Frame { rotating, lab };

/// Coherent drive alpha(t) = amplitude * envelope(t) * exp(i carrier t), coupling as
/// H_drive = alpha(t) a + conj(alpha(t)) a^dagger.
struct DriveEnvelope {
  enum class Kind { none, gaussian, sampled };
  Kind kind = Kind::none;
  Complex amplitude{0.0, 0.0};     ///< eV
  double center_fs = 0.0;
  double duration_fs = 0.0;        ///< full width at half maximum of the envelope
  std::optional<double> carrier;   ///< eV; resonant with omega_a when unset
  /// Sampled envelope (linear interpolation, zero outside the samples).
  std::vector<double> sample_times_fs;
  std::vector<Complex> samples;

  bool present() const { return kind != Kind::none; }
  /// Support of the envelope; a Gaussian is cut at +-4 FWHM from its centre.
  double start_fs() const;
  double end_fs() const;
  Complex envelope(double t_fs) const;
  void check() const;

  static DriveEnvelope gaussian(Complex amplitude, double center_fs, double fwhm_fs);
};

struct SimulationConfig {
  double omega_a = 1.0;  ///< eV
  double beta = 0.0;
  CouplingModel coupling = ConstantCoupling{};
  DriveEnvelope drive;
  int dim = 2;
  Frame frame = Frame::rotating;
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  /// Allowed |Tr rho(t) - Tr rho(0)| per fs of evolution, on top of a 1e-9 floor.
  double trace_budget_per_fs = 1e-9;
  /// Include Im K_l (frequency pull of each transition) in the dissipator.
  bool lamb_shift = true;
  /// Grid for the Kramers-Kronig integral; default_grid around omega_a when unset.
  std::optional<FrequencyGrid> lamb_grid;
  /// Fock number tracked by fidelity_n0 in trajectory records.
  std::optional<int> target_fock;

  void check() const;
};

/// K_l(omega_{m,m-1}) for m = 0..dim-1 (entry 0 is unused and set to 0).
ComplexVector loss_rates(const SimulationConfig& config);

/// Diagonal of the conservative Hamiltonian: beta omega_a n(n-1), plus omega_a n in the lab frame.
RealVector level_energies(const SimulationConfig& config);

/// D[rho] with precomputed loss rates.
Matrix dissipator_apply(const DensityMatrix& rho, const ComplexVector& kl);
Matrix dissipator_apply(const DensityMatrix& rho, const SimulationConfig& config);

/// d rho/dt = -i[H(t), rho] + D[rho] in eV (per internal time unit), t in fs.
Matrix liouvillian_rhs(const DensityMatrix& rho, double t_fs, const SimulationConfig& config);

struct ObservableRecord {
  double mean = 0.0;
  double variance = 0.0;
  double squeezing_db = 0.0;  ///< NaN when the mean is zero
  double g2 = 0.0;            ///< NaN for the vacuum
  double fidelity_n0 = 0.0;   ///< NaN without a target Fock number
  double trace_defect = 0.0;  ///< |Tr rho - 1|
};

/// Squeezing and g2 are NaN once the mean photon number drops below 1e-9.
ObservableRecord make_record(const RealVector& populations, std::optional<int> target_fock);

struct Trajectory {
  std::vector<double> times_fs;
  std::vector<ObservableRecord> records;
  std::vector<RealVector> populations;
  std::vector<DensityMatrix> states;  ///< only when requested
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
};

struct EvolveOptions {
  bool store_states = false;
};

/// Full density-matrix evolution. The stiff diagonal part of the Liouvillian (level
/// energies and the decay of each element) is integrated exactly, the rest (feeding from
/// the level above and the drive) by an adaptive embedded 5(4) Runge-Kutta scheme.
/// Records observables at every t_grid point (fs); t_grid[0] is the time of rho0.
Trajectory evolve(const DensityMatrix& rho0, const SimulationConfig& config, const std::vector<double>& t_grid_fs,
                  const EvolveOptions& options = {});

/// Undriven diagonal: p_n' = -r_n p_n + r_{n+1} p_{n+1}, r_n = 2 n kappa(n).
/// Throws UnsupportedModelError when the config carries a drive.
Trajectory evolve_diagonal(const RealVector& p0, const SimulationConfig& config,
                           const std::vector<double>& t_grid_fs);

struct ClosureTrajectory {
  std::vector<double> times_fs;
  std::vector<double> mean;
  std::vector<double> variance;
  /// Set at every grid time where var < 0 or var > 10 mean (the closure is no longer trustworthy).
  std::vector<bool> warning;
  bool any_warning() const;
};

/// Second-order moment closure of the death chain for large photon numbers:
///   dm/dt = -(r(m) + r''(m) V/2),   dV/dt = r(m) + r''(m) V/2 - 2 r'(m) V,
/// with the third cumulant set to zero.
ClosureTrajectory moment_closure_evolve(double mean0, double var0, const SimulationConfig& config,
                                        const std::vector<double>& t_grid_fs);

struct PumpOptions {
  enum class Mode { preload, pulse };
  Mode mode = Mode::preload;
  double target_mean = 50.0;
  double phase = 0.0;  ///< preload only
  double horizon_fs = 1e6;
  int samples = 201;
  bool log_spacing = true;
  EvolveOptions evolve;
};

/// Pump-and-ringdown. Preload starts from coherent_state(target_mean) at t = 0.
/// Pulse mode requires a Gaussian drive; its amplitude is rescaled by a secant search
/// until the post-pulse mean is within 1% of target_mean, then the state rings down
/// freely. Throws ConfigError when the pulse is not short compared with 1/max kappa(n)
/// and 1/(beta omega_a dim).
Trajectory pump_and_ringdown(const SimulationConfig& config, const PumpOptions& options);

/// The drive amplitude found by the calibration in pulse mode.
Complex calibrate_pulse(const SimulationConfig& config, double target_mean);

/// n points from 0 to horizon; log spacing puts the first nonzero time at horizon * 1e-6.
std::vector<double> ringdown_grid(double horizon_fs, int n, bool log_spacing);
std::vector<double> linear_grid(double t0_fs, double t1_fs, int n);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
/// Writes state_t<fs>.dat files ("re im" pairs, row-major) for every stored state.
void write_snapshots(const std::string& directory, const Trajectory& traj);

}  // namespace kerrbic
