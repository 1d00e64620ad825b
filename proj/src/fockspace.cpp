#include "kerrbic/fockspace.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace kerrbic {

double poisson_pmf(double mean, int n) {
  if (n < 0) return 0.0;
  if (mean <= 0.0) return n == 0 ? 1.0 : 0.0;
  return std::exp(-mean + n * std::log(mean) - log_factorial(n));
}

RealVector poisson_distribution(double mean, int dim) {
  RealVector p(dim);
  for (int n = 0; n < dim; ++n) p(n) = poisson_pmf(mean, n);
  return p;
}

int truncation_dim(double mean, double tail_tol) {
  if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw Error("truncation_dim: tail_tol must lie in (0,1)");
  if (mean <= 0.0) return 1;
  // Sum the tail from well past the bulk downwards so small terms are added first.
  const int upper = static_cast<int>(std::ceil(mean + 40.0 * std::sqrt(mean) + 60.0));
  std::vector<double> tail(upper + 2, 0.0);
  for (int n = upper; n >= 0; --n) tail[n] = tail[n + 1] + poisson_pmf(mean, n);
  for (int n = 1; n <= upper; ++n)
    if (tail[n] < tail_tol) return n;
  return upper + 1;
}

DensityMatrix fock_state(int n, int dim) {
  if (dim < 1) throw DimensionError("fock_state: dim must be positive");
  if (n < 0 || n >= dim)
    throw DimensionError("fock_state: n=" + std::to_string(n) + " outside basis of size " +
                         std::to_string(dim));
  DensityMatrix rho = DensityMatrix::Zero(dim, dim);
  rho(n, n) = 1.0;
  return rho;
}

ComplexVector coherent_amplitudes(Complex alpha, int dim) {
  ComplexVector c = ComplexVector::Zero(dim);
  const double r = std::abs(alpha);
  const double phase = std::arg(alpha);
  if (r == 0.0) {
    if (dim > 0) c(0) = 1.0;
    return c;
  }
  const double log_r = std::log(r);
  for (int n = 0; n < dim; ++n) {
    const double log_mag = -0.5 * r * r + n * log_r - 0.5 * log_factorial(n);
    c(n) = std::polar(std::exp(log_mag), n * phase);
  }
  return c;
}

DensityMatrix coherent_state(double mean, double phase, int dim, double tail_tol) {
  if (mean < 0.0) throw Error("coherent_state: mean photon number must be >= 0");
  const int required = truncation_dim(mean, tail_tol);
  if (required > dim)
    throw TruncationError("coherent_state: mean " + std::to_string(mean) + " needs dim >= " +
                              std::to_string(required) + " (got " + std::to_string(dim) + ")",
                          required);
  const ComplexVector c = coherent_amplitudes(std::polar(std::sqrt(mean), phase), dim);
  return c * c.adjoint();
}

DensityMatrix diagonal_state(const RealVector& populations) {
  return populations.cast<Complex>().asDiagonal();
}

Matrix ladder_matrix(Ladder which, int dim) {
  Matrix op = Matrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) {
    const double s = std::sqrt(static_cast<double>(n));
    switch (which) {
      case Ladder::lower: op(n - 1, n) = s; break;
      case Ladder::raise: op(n, n - 1) = s; break;
      case Ladder::number: op(n, n) = n; break;
    }
  }
  return op;
}

Matrix ladder_apply(Ladder which, const Matrix& rho) {
  const Eigen::Index dim = rho.rows();
  Matrix out = Matrix::Zero(dim, rho.cols());
  switch (which) {
    case Ladder::lower:
      for (Eigen::Index m = 0; m + 1 < dim; ++m)
        out.row(m) = std::sqrt(static_cast<double>(m + 1)) * rho.row(m + 1);
      break;
    case Ladder::raise:
      for (Eigen::Index m = 1; m < dim; ++m)
        out.row(m) = std::sqrt(static_cast<double>(m)) * rho.row(m - 1);
      break;
    case Ladder::number:
      for (Eigen::Index m = 1; m < dim; ++m) out.row(m) = static_cast<double>(m) * rho.row(m);
      break;
  }
  return out;
}

StateDiagnostics validate(const Matrix& rho) {
  StateDiagnostics d;
  const Eigen::Index dim = rho.rows();
  if (dim == 0 || rho.cols() != dim) {
    d.trace_defect = 1.0;
    return d;
  }
  d.hermiticity_defect = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  d.trace_defect = std::abs(rho.trace() - Complex(1.0, 0.0));
  d.min_diagonal = rho.diagonal().real().minCoeff();

  const Matrix herm = 0.5 * (rho + rho.adjoint());
  if (dim <= exact_positivity_max_dim) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
    d.min_eigenvalue = es.eigenvalues().minCoeff();
  } else {
    double bound = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double radius = herm.row(i).cwiseAbs().sum() - std::abs(herm(i, i));
      bound = std::min(bound, herm(i, i).real() - radius);
    }
    d.min_eigenvalue = bound;
    d.eigenvalue_is_bound = true;
  }
  return d;
}

}  // namespace kerrbic
