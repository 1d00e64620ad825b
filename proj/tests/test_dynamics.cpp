#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kerrbic/design.hpp"
#include "kerrbic/dynamics.hpp"
#include "kerrbic/fockspace.hpp"
#include "kerrbic/observables.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace kerrbic;

namespace {

// hbar in eV fs (CODATA); rates in eV turn into times through it.
constexpr double hbar = 0.6582119569;
constexpr double fs_to_internal(double t_fs) { return t_fs / hbar; }
constexpr double internal_to_fs(double t) { return t * hbar; }

constexpr double wa = 1.47;
constexpr double beta_ref = 5e-6;
const double c2_ref = (1e-3 * wa) / (1e-2 * wa * 1e-2 * wa);

Matrix random_density(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = Complex(g(rng), g(rng));
  Matrix rho = a * a.adjoint();
  return rho / rho.trace();
}

SimulationConfig quadratic_config(double n0, double kappa_i, int dim) {
  SimulationConfig c;
  c.omega_a = wa;
  c.beta = beta_ref;
  c.coupling = QuadraticLoss{wa + detuning_for_fock(n0, wa, beta_ref), c2_ref, kappa_i};
  c.dim = dim;
  return c;
}

double binomial_pmf(int n, int k, double p) {
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                  (n - k) * std::log1p(-p));
}

}  // namespace

TEST_CASE("dissipator matches the Lindblad form for constant coupling") {
  const double kappa = 0.01;
  SimulationConfig c;
  c.coupling = ConstantCoupling{kappa};
  c.dim = 8;
  const Matrix rho = random_density(8, 1);
  const Matrix a = ladder_matrix(Ladder::lower, 8);
  const Matrix ad = a.adjoint();
  const Matrix lindblad = 2.0 * kappa * (a * rho * ad - 0.5 * (ad * a * rho + rho * ad * a));
  CHECK((dissipator_apply(rho, c) - lindblad).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("property: the dissipator conserves trace and hermiticity") {
  SimulationConfig c = quadratic_config(4, 1e-7 * wa, 12);
  c.coupling = TerminatedWaveguide{1e-3 * wa, 1e-2 * wa, 0.4, 1e-6};
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix rho = random_density(12, s + 10);
    const Matrix d = dissipator_apply(rho, c);
    CHECK(std::abs(d.trace()) < 1e-14);
    CHECK((d - d.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    const Matrix l = liouvillian_rhs(rho, 0.0, c);
    CHECK(std::abs(l.trace()) < 1e-13);
  }
}

TEST_CASE("markovian decay keeps a coherent state coherent") {
  const double kappa = 1e-3 * wa;
  SimulationConfig c;
  c.omega_a = wa;
  c.coupling = ConstantCoupling{kappa};
  c.dim = 40;
  const double tau = internal_to_fs(1.0 / (2.0 * kappa));
  const std::vector<double> grid = linear_grid(0.0, 3.0 * tau, 7);
  const Trajectory t = evolve(coherent_state(5, 0.0, 40), c, grid, {true});
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = 5.0 * std::exp(-2.0 * kappa * fs_to_internal(grid[i]));
    const ComplexVector amp = coherent_amplitudes(std::sqrt(m), 40);
    const Matrix ref = amp * amp.adjoint();
    CHECK((t.states[i] - ref).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("lossless kerr evolution is a pure phase") {
  SimulationConfig c;
  c.omega_a = wa;
  c.beta = 1e-3;
  c.coupling = ConstantCoupling{0.0};
  c.dim = 30;
  c.frame = Frame::lab;
  const Matrix rho0 = coherent_state(3, 0.2, 30);
  const double t_fs = 50.0;
  const Trajectory t = evolve(rho0, c, {0.0, t_fs}, {true});
  const double ti = fs_to_internal(t_fs);
  double worst = 0.0;
  for (int m = 0; m < 30; ++m)
    for (int n = 0; n < 30; ++n) {
      const double em = wa * m + c.beta * wa * m * (m - 1.0);
      const double en = wa * n + c.beta * wa * n * (n - 1.0);
      worst = std::max(worst, std::abs(t.states[1](m, n) - rho0(m, n) * std::polar(1.0, -(em - en) * ti)));
    }
  CHECK(worst < 1e-7);
}

TEST_CASE("a resonant pulse on a linear cavity leaves a coherent state") {
  const double kappa = 2e-3;
  SimulationConfig c;
  c.omega_a = wa;
  c.coupling = ConstantCoupling{kappa};
  c.dim = 30;
  c.drive = DriveEnvelope::gaussian(Complex(0.01, 0.0), 200.0, 50.0);
  const double t_end = 500.0;
  const Trajectory t = evolve(fock_state(0, 30), c, {0.0, t_end}, {true});

  // <a>' = -i alpha*(t) - kappa <a>, integrated with fixed-step RK4 in internal units.
  const int steps = 200000;
  const double h = fs_to_internal(t_end) / steps;
  Complex a(0.0, 0.0);
  auto f = [&](double s, Complex x) {
    const Complex alpha = c.drive.amplitude * c.drive.envelope(internal_to_fs(s));
    return Complex(0.0, -1.0) * std::conj(alpha) - kappa * x;
  };
  for (int i = 0; i < steps; ++i) {
    const double s = i * h;
    const Complex k1 = f(s, a), k2 = f(s + h / 2, a + h / 2 * k1);
    const Complex k3 = f(s + h / 2, a + h / 2 * k2), k4 = f(s + h, a + h * k3);
    a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  const Matrix lower = ladder_matrix(Ladder::lower, 30);
  const Complex a_num = (lower * t.states[1]).trace();
  CHECK(std::abs(a_num - a) < 1e-6 * std::max(1.0, std::abs(a)));
  CHECK(t.records[1].mean == doctest::Approx(std::norm(a)).epsilon(1e-6));
  CHECK(t.records[1].g2 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("death chain from a fock state is binomial") {
  const double kappa = 1e-3 * wa;
  SimulationConfig c;
  c.omega_a = wa;
  c.coupling = ConstantCoupling{kappa};
  c.dim = 13;
  const std::vector<double> grid = ringdown_grid(2000.0, 11, true);
  const Trajectory t = evolve_diagonal(fock_state(12, 13).diagonal().real(), c, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = std::exp(-2.0 * kappa * fs_to_internal(grid[i]));
    for (int k = 0; k <= 12; ++k) {
      const double ref = p == 1.0 ? double(k == 12) : binomial_pmf(12, k, p);
      CHECK(t.populations[i](k) == doctest::Approx(ref).epsilon(1e-7).scale(1e-3));
    }
  }
}

TEST_CASE("full and diagonal paths agree when undriven") {
  SimulationConfig c = quadratic_config(6, 1e-6 * wa, 30);
  c.rel_tol = 1e-10;
  c.abs_tol = 1e-14;
  const std::vector<double> grid = ringdown_grid(1e6, 21, true);
  const Trajectory full = evolve(diagonal_state(poisson_distribution(10, 30)), c, grid);
  const Trajectory diag = evolve_diagonal(poisson_distribution(10, 30), c, grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    worst = std::max(worst, (full.populations[i] - diag.populations[i]).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-9);
  CHECK_THROWS_AS(
      [&] {
        SimulationConfig d = c;
        d.drive = DriveEnvelope::gaussian(1.0, 10.0, 5.0);
        evolve_diagonal(poisson_distribution(10, 30), d, grid);
      }(),
      UnsupportedModelError);
}

TEST_CASE("moment closure is exact for linear loss") {
  const double kappa = 1e-3 * wa;
  SimulationConfig c;
  c.omega_a = wa;
  c.coupling = ConstantCoupling{kappa};
  const std::vector<double> grid = linear_grid(0.0, 2000.0, 9);
  const ClosureTrajectory t = moment_closure_evolve(40.0, 40.0, c, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = 40.0 * std::exp(-2.0 * kappa * fs_to_internal(grid[i]));
    CHECK(t.mean[i] == doctest::Approx(m).epsilon(1e-7));
    CHECK(t.variance[i] == doctest::Approx(m).epsilon(1e-6));
  }
  CHECK_FALSE(t.any_warning());
}

TEST_CASE("pump and ringdown") {
  SimulationConfig c = quadratic_config(3, 0.0, truncation_dim(8, 1e-10) + 5);
  PumpOptions preload;
  preload.target_mean = 8;
  preload.horizon_fs = 1e5;
  preload.samples = 5;
  const Trajectory t = pump_and_ringdown(c, preload);
  CHECK(t.records.front().mean == doctest::Approx(8.0).epsilon(1e-9));

  SUBCASE("pulse calibration hits the requested loading") {
    c.drive = DriveEnvelope::gaussian(1e-3, 100.0, 20.0);
    PumpOptions pulse = preload;
    pulse.mode = PumpOptions::Mode::pulse;
    const Trajectory p = pump_and_ringdown(c, pulse);
    CHECK(p.records[1].mean == doctest::Approx(8.0).epsilon(1e-2));
  }
  SUBCASE("slow pulses are refused") {
    c.drive = DriveEnvelope::gaussian(1e-3, 1e7, 1e6);
    PumpOptions pulse = preload;
    pulse.mode = PumpOptions::Mode::pulse;
    CHECK_THROWS_AS(pump_and_ringdown(c, pulse), ConfigError);
  }
}

TEST_CASE("grids and files") {
  const auto g = ringdown_grid(1e9, 5, true);
  REQUIRE(g.size() == 5);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(1e3));
  CHECK(g[4] == 1e9);
  const auto l = linear_grid(0.0, 10.0, 3);
  CHECK(l[1] == 5.0);

  SimulationConfig c = quadratic_config(3, 0.0, 10);
  c.target_fock = 3;
  const Trajectory t = evolve_diagonal(fock_state(5, 10).diagonal().real(), c, {0.0, 1e9});
  std::ostringstream os;
  write_trajectory_csv(os, t);
  const std::string s = os.str();
  CHECK(s.rfind("t_fs,mean_n,var_n,squeezing_db,g2,fidelity_n0,trace_defect\n0,5,0,-inf,0.8,0,0\n", 0) == 0);
  CHECK(t.records.back().fidelity_n0 == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("configuration checks") {
  SimulationConfig c;
  c.dim = 1;
  CHECK_THROWS_AS(c.check(), ConfigError);
  c.dim = 5;
  c.target_fock = 7;
  CHECK_THROWS_AS(c.check(), ConfigError);
  c.target_fock.reset();
  c.drive = DriveEnvelope::gaussian(1.0, 0.0, -1.0);
  CHECK_THROWS_AS(c.check(), ConfigError);
}
