#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kerrbic/fockspace.hpp"
#include "kerrbic/observables.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace kerrbic;

TEST_CASE("fock state statistics") {
  for (int n : {1, 2, 10, 25}) {
    const DensityMatrix rho = fock_state(n, n + 3);
    const MeanVar mv = mean_var(rho);
    CHECK(mv.mean == doctest::Approx(n));
    CHECK(mv.variance == doctest::Approx(0.0));
    CHECK(g2_zero(rho) == doctest::Approx(1.0 - 1.0 / n));
    CHECK(std::isinf(squeezing_db(rho)));
    CHECK(squeezing_db(rho) < 0.0);
    CHECK(fidelity_fock(rho, n) == 1.0);
    CHECK(fidelity_fock(rho, n - 1) == 0.0);
  }
  CHECK(fidelity_fock(fock_state(2, 4), 9) == 0.0);
}

TEST_CASE("coherent state statistics") {
  const DensityMatrix rho = coherent_state(20, 0.3, truncation_dim(20, 1e-14));
  CHECK(g2_zero(rho) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(squeezing_db(rho) == doctest::Approx(0.0).epsilon(1e-8).scale(1.0));
  CHECK(mean_var(rho).variance == doctest::Approx(20.0).epsilon(1e-10));
}

TEST_CASE("undefined observables") {
  const DensityMatrix vac = fock_state(0, 5);
  CHECK_THROWS_AS(g2_zero(vac), UndefinedObservableError);
  CHECK_THROWS_AS(squeezing_db(vac), UndefinedObservableError);
  CHECK(mean_var(vac).mean == 0.0);
}

TEST_CASE("thermal-like mixture") {
  // Geometric distribution with mean m: variance m + m^2 and g2 = 2.
  const double m = 2.0;
  RealVector p(200);
  for (int n = 0; n < 200; ++n) p(n) = std::pow(m / (1.0 + m), n) / (1.0 + m);
  CHECK(mean_var(p).variance == doctest::Approx(m + m * m).epsilon(1e-10));
  CHECK(g2_zero(p) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(squeezing_db(p) == doctest::Approx(10.0 * std::log10(1.0 + m)));
}

TEST_CASE("property: variance stays non-negative when the trace drifts") {
  for (double eps : {1e-12, 1e-8, -1e-8, 1e-5}) {
    RealVector p = RealVector::Zero(60);
    p(50) = 1.0 + eps;
    CAPTURE(eps);
    CHECK(mean_var(p).variance >= 0.0);
    CHECK(mean_var(p).variance < 1e-10);
    RealVector q = poisson_distribution(20, 60) * (1.0 + eps);
    const double ref = (poisson_distribution(20, 60).array() * (RealVector::LinSpaced(60, 0, 59).array() - 20.0).square()).sum();
    CHECK(mean_var(q).variance == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("photon distribution clips round-off negatives only") {
  DensityMatrix rho = DensityMatrix::Zero(3, 3);
  rho(0, 0) = 1.0;
  rho(1, 1) = -1e-12;
  rho(2, 2) = -1e-3;
  const RealVector p = photon_distribution(rho);
  CHECK(p(1) == 0.0);
  CHECK(p(2) == -1e-3);
}

TEST_CASE("husimi of a coherent state") {
  const Complex beta = std::polar(2.0, 0.7);
  const DensityMatrix rho = coherent_state(4.0, 0.7, 40);
  const HusimiGrid q = husimi(rho, husimi_grid(6.0, 61));
  double worst = 0.0, total = 0.0;
  for (int i = 0; i < q.im_count; ++i)
    for (int j = 0; j < q.re_count; ++j) {
      const Complex a(q.re_at(j), q.im_at(i));
      worst = std::max(worst, std::abs(q.values(i, j) - std::exp(-std::norm(a - beta)) / std::numbers::pi));
      total += q.values(i, j);
    }
  CHECK(worst < 1e-9);
  CHECK(total * q.cell_area() == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(q.normalisation() == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_FALSE(q.radius_warning);
  CHECK(husimi(rho, husimi_grid(2.0, 11)).radius_warning);
}

TEST_CASE("husimi of a fock state is a ring") {
  const int n = 5;
  const HusimiGrid q = husimi(fock_state(n, 8), husimi_grid(5.0, 41));
  for (int i = 0; i < q.im_count; i += 7)
    for (int j = 0; j < q.re_count; j += 5) {
      const double r2 = q.re_at(j) * q.re_at(j) + q.im_at(i) * q.im_at(i);
      const double ref = std::exp(-r2 + n * std::log(std::max(r2, 1e-300)) - std::lgamma(n + 1.0)) / std::numbers::pi;
      CHECK(q.values(i, j) == doctest::Approx(ref).epsilon(1e-9).scale(1e-12));
    }
}

TEST_CASE("husimi csv layout") {
  const HusimiGrid q = husimi(fock_state(0, 2), husimi_grid(1.0, 3));
  std::ostringstream os;
  write_husimi_csv(os, q);
  std::istringstream is(os.str());
  std::string l1, l2, row;
  std::getline(is, l1);
  std::getline(is, l2);
  CHECK(l1 == "# re_min=-1,re_max=1,re_count=3");
  CHECK(l2 == "# im_min=-1,im_max=1,im_count=3");
  int rows = 0;
  while (std::getline(is, row)) ++rows;
  CHECK(rows == 3);
}
