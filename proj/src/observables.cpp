#include "kerrbic/observables.hpp"

#include "kerrbic/csv.hpp"
#include "kerrbic/fockspace.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace kerrbic {

MeanVar mean_var(const RealVector& p) {
  const Eigen::Index dim = p.size();
  const RealVector n = RealVector::LinSpaced(dim, 0.0, static_cast<double>(dim - 1));
  MeanVar r;
  r.mean = n.dot(p);
  // Central moment about the normalised mean: a state whose trace has drifted by eps
  // would otherwise report a variance of order -eps * mean^2.
  const double trace = p.sum();
  const double mu = trace > 0.0 ? r.mean / trace : r.mean;
  r.variance = trace > 0.0 ? (n.array() - mu).square().matrix().dot(p) / trace : 0.0;
  return r;
}

MeanVar mean_var(const DensityMatrix& rho) { return mean_var(RealVector(rho.diagonal().real())); }

double squeezing_db(const RealVector& p) {
  const MeanVar mv = mean_var(p);
  if (!(mv.mean > 0.0)) throw UndefinedObservableError("squeezing_db: mean photon number is zero");
  if (mv.variance <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(mv.variance / mv.mean);
}

double squeezing_db(const DensityMatrix& rho) { return squeezing_db(RealVector(rho.diagonal().real())); }

double g2_zero(const RealVector& p) {
  double first = 0.0, second = 0.0;
  for (Eigen::Index n = 0; n < p.size(); ++n) {
    first += n * p(n);
    second += n * (n - 1.0) * p(n);
  }
  if (!(first > 0.0)) throw UndefinedObservableError("g2_zero: state has no photons");
  return second / (first * first);
}

double g2_zero(const DensityMatrix& rho) { return g2_zero(RealVector(rho.diagonal().real())); }

double fidelity_fock(const DensityMatrix& rho, int n0) {
  if (n0 < 0 || n0 >= rho.rows()) return 0.0;
  return rho(n0, n0).real();
}

RealVector photon_distribution(const DensityMatrix& rho) {
  RealVector p = rho.diagonal().real();
  for (Eigen::Index n = 0; n < p.size(); ++n)
    if (p(n) < 0.0 && p(n) >= -1e-10) p(n) = 0.0;
  return p;
}

HusimiGrid husimi_grid(double radius, int count) {
  HusimiGrid g;
  g.re_min = g.im_min = -radius;
  g.re_max = g.im_max = radius;
  g.re_count = g.im_count = count;
  return g;
}

HusimiGrid husimi(const DensityMatrix& rho, HusimiGrid grid) {
  if (grid.re_count < 2 || grid.im_count < 2) throw ConfigError("husimi: grid needs at least 2 points per axis");
  const int dim = static_cast<int>(rho.rows());
  grid.values.resize(grid.im_count, grid.re_count);
  for (int i = 0; i < grid.im_count; ++i) {
    for (int j = 0; j < grid.re_count; ++j) {
      const ComplexVector c = coherent_amplitudes(Complex(grid.re_at(j), grid.im_at(i)), dim);
      // <alpha|rho|alpha> with <alpha|n> = conj(c_n).
      const double q = (c.adjoint() * rho * c)(0, 0).real() / std::numbers::pi;
      grid.values(i, j) = std::max(q, 0.0);
    }
  }
  const MeanVar mv = mean_var(rho);
  // Q falls off like exp(-d^2) outside the photon-number shell, so 2.5 beyond it is below 1e-2 of the peak.
  const double needed = std::sqrt(std::max(mv.mean, 0.0) + 3.0 * std::sqrt(std::max(mv.variance, 0.0))) + 2.5;
  const double reach = std::min({-grid.re_min, grid.re_max, -grid.im_min, grid.im_max});
  grid.radius_warning = reach < needed;
  return grid;
}

void write_husimi_csv(std::ostream& out, const HusimiGrid& q) {
  out << "# re_min=" << fmt_num(q.re_min) << ",re_max=" << fmt_num(q.re_max) << ",re_count=" << q.re_count
      << "\n";
  out << "# im_min=" << fmt_num(q.im_min) << ",im_max=" << fmt_num(q.im_max) << ",im_count=" << q.im_count
      << "\n";
  for (Eigen::Index i = 0; i < q.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < q.values.cols(); ++j) {
      if (j) out << ',';
      out << fmt_num(q.values(i, j));
    }
    out << '\n';
  }
}

}  // namespace kerrbic
