#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kerrbic/fockspace.hpp"
#include "kerrbic/pinem.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>

using namespace kerrbic;

namespace {

// Dense oracle: exp(g a b^dagger - g* a^dagger b) on cavity x electron ladder, applied to
// every populated |n>|k=0> and weighted by p_n.
RealVector brute_force(const RealVector& p, Complex g, int k_max) {
  const int cav = static_cast<int>(p.size()) + k_max + 1;
  const int el = 2 * k_max + 1;
  const int dim = cav * el;
  auto idx = [&](int n, int k) { return n * el + (k + k_max); };
  Matrix gen = Matrix::Zero(dim, dim);
  for (int n = 1; n < cav; ++n)
    for (int k = -k_max; k < k_max; ++k) {
      // a b^dagger |n, k> = sqrt(n) |n-1, k+1>
      gen(idx(n - 1, k + 1), idx(n, k)) += g * std::sqrt(double(n));
      gen(idx(n, k), idx(n - 1, k + 1)) -= std::conj(g) * std::sqrt(double(n));
    }
  const Matrix s = gen.exp();
  RealVector out = RealVector::Zero(el);
  for (int n = 0; n < p.size(); ++n) {
    if (p(n) == 0.0) continue;
    const ComplexVector col = s.col(idx(n, 0));
    for (int m = 0; m < cav; ++m)
      for (int k = -k_max; k <= k_max; ++k) out(k + k_max) += p(n) * std::norm(col(idx(m, k)));
  }
  return out;
}

}  // namespace

TEST_CASE("spectra match the dense exponential") {
  for (Complex g : {Complex(0.1, 0.0), Complex(0.0, 0.3), Complex(0.2, -0.15)}) {
    CAPTURE(g);
    const int k_max = 12;
    RealVector mix = RealVector::Zero(6);
    mix << 0.1, 0.2, 0.0, 0.3, 0.0, 0.4;
    for (const RealVector& p : {RealVector(fock_state(4, 6).diagonal().real()), mix}) {
      const PinemSpectrum s = pinem_spectrum(diagonal_state(p), g, k_max);
      const RealVector ref = brute_force(p, g, k_max);
      CHECK((s.probabilities - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("property: normalisation and gain cut-off") {
  for (double g : {0.05, 0.1, 0.2, 0.5}) {
    for (int n : {0, 1, 10, 30}) {
      const PinemSpectrum s = pinem_spectrum(fock_state(n, n + 1), g, 40);
      CHECK(std::abs(s.total() - 1.0) < 1e-12);
      for (int k = n + 1; k <= 40; ++k) CHECK(s.at(k) == 0.0);
    }
    const PinemSpectrum c = pinem_spectrum(coherent_state(10, 0.0, 40), g, 30);
    CHECK(std::abs(c.total() - 1.0) < 1e-8);
  }
}

TEST_CASE("vacuum and zero coupling") {
  // From the vacuum the electron can only emit; the loss peaks are Poissonian in |g|^2.
  const PinemSpectrum v = pinem_spectrum(fock_state(0, 3), 0.4, 12);
  double w = std::exp(-0.16);
  for (int m = 0; m <= 6; ++m) {
    CHECK(v.at(-m) == doctest::Approx(w).epsilon(1e-12));
    w *= 0.16 / (m + 1);
  }
  CHECK(v.at(1) == 0.0);
  const PinemSpectrum z = pinem_spectrum(fock_state(5, 6), 0.0, 5);
  CHECK(z.at(0) == 1.0);
}

TEST_CASE("coherent states: Bessel peaks dressed by spontaneous emission") {
  // Exact for a coherent drive: the classical J_k(2|g|sqrt(n))^2 comb, convolved with
  // Poissonian loss steps of mean |g|^2.
  const double g = 0.1;
  const PinemSpectrum s = pinem_spectrum(coherent_state(100, 0.0, truncation_dim(100, 1e-12)), g, 30);
  for (int k = -12; k <= 12; ++k) {
    double ref = 0.0, w = std::exp(-g * g);
    for (int m = 0; m < 12; ++m) {
      const double j = std::cyl_bessel_j(std::abs(k + m), 2.0 * g * 10.0);
      ref += w * j * j;
      w *= g * g / (m + 1);
    }
    CAPTURE(k);
    CHECK(s.at(k) == doctest::Approx(ref).epsilon(1e-9).scale(1e-12));
  }
}

TEST_CASE("coupling phase does not change the spectrum") {
  const DensityMatrix rho = coherent_state(6, 0.3, 30);
  const PinemSpectrum a = pinem_spectrum(rho, 0.2, 20);
  const PinemSpectrum b = pinem_spectrum(rho, std::polar(0.2, 1.1), 20);
  CHECK((a.probabilities - b.probabilities).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("short electron ladders are reported") {
  try {
    pinem_spectrum(coherent_state(100, 0.0, 171), 0.1, 2);
    FAIL("expected TruncationError");
  } catch (const TruncationError& e) {
    CHECK(e.required_dim > 2);
    CHECK_NOTHROW(pinem_spectrum(coherent_state(100, 0.0, 171), 0.1, e.required_dim));
  }
}

TEST_CASE("discrimination") {
  const PinemSpectrum f = pinem_spectrum(fock_state(10, 40), 0.2, 25);
  const PinemSpectrum c = pinem_spectrum(coherent_state(10, 0.0, 40), 0.2, 25);
  const double d = discriminate(f, c);
  CHECK(d > 0.0);
  CHECK(d <= 1.0);
  CHECK(discriminate(f, f) == 0.0);
  CHECK(d == doctest::Approx(discriminate(c, f)));
  CHECK_THROWS_AS(discriminate(f, pinem_spectrum(fock_state(10, 40), 0.2, 24)), DimensionError);
}

TEST_CASE("csv") {
  std::ostringstream os;
  write_pinem_csv(os, pinem_spectrum(fock_state(1, 2), Complex(0.1, -0.2), 10), "fock:1");
  std::istringstream is(os.str());
  std::string l1, l2;
  std::getline(is, l1);
  std::getline(is, l2);
  CHECK(l1 == "# g=0.1-0.2i state=fock:1 k_max=10");
  CHECK(l2 == "k,P_k");
}
