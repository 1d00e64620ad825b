#pragma once

#include "kerrbic/core.hpp"

#include <cmath>

namespace kerrbic {

/// ln(n!) via lgamma; exact enough for all n we ever index.
inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

/// Poisson(mean) probability of n, evaluated in log space.
double poisson_pmf(double mean, int n);

/// Poisson(mean) pmf on 0..dim-1.
RealVector poisson_distribution(double mean, int dim);

/// Smallest N such that the Poisson(mean) mass on n >= N is below tail_tol.
int truncation_dim(double mean, double tail_tol);

/// |n><n| on a basis of size dim.
DensityMatrix fock_state(int n, int dim);

/// |alpha><alpha| with alpha = sqrt(mean) e^{i phase}, truncated to dim.
/// Throws TruncationError when the Poisson tail beyond dim-1 exceeds tail_tol.
/// The truncated state is not renormalised: its diagonal is the exact pmf.
DensityMatrix coherent_state(double mean, double phase, int dim, double tail_tol = 1e-10);

/// Diagonal density matrix from a probability vector.
DensityMatrix diagonal_state(const RealVector& populations);

/// Amplitudes <n|alpha> for n < dim, computed with log-space factorials.
ComplexVector coherent_amplitudes(Complex alpha, int dim);

enum class Ladder { lower, raise, number };

/// Dense matrix of a, a^dagger or a^dagger a on the truncated basis.
Matrix ladder_matrix(Ladder which, int dim);

/// Left action a rho, a^dagger rho or a^dagger a rho.
/// a^dagger|dim-1> leaves the basis and is dropped.
Matrix ladder_apply(Ladder which, const Matrix& rho);

struct StateDiagnostics {
  double hermiticity_defect = 0.0;  ///< max |rho_mn - conj(rho_nm)|
  double trace_defect = 0.0;        ///< |Tr rho - 1|
  double min_diagonal = 0.0;
  /// Smallest eigenvalue of the Hermitian part. Exact for dim <= 256,
  /// otherwise a Gershgorin lower bound (never larger than the true value).
  double min_eigenvalue = 0.0;
  bool eigenvalue_is_bound = false;

  bool ok(double herm_tol = 1e-12, double trace_tol = 1e-9, double neg_tol = 1e-10) const {
    return hermiticity_defect <= herm_tol && trace_defect <= trace_tol &&
           min_diagonal >= -neg_tol;
  }
};

inline constexpr int exact_positivity_max_dim = 256;

StateDiagnostics validate(const Matrix& rho);

}  // namespace kerrbic
