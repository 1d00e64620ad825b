#include "kerrbic/pinem.hpp"

#include "kerrbic/csv.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace kerrbic {

namespace {

constexpr double edge_tolerance = 1e-8;

struct BlockResult {
  RealVector spectrum;  // indexed k + k_max
  double edge = 0.0;    // probability on artificial ends of the electron ladder
};

// For total excitation N = n + k the block spans k = -k_max .. min(k_max, N).
// With the phase of i g moved into a diagonal similarity transform, the generator
// becomes -i T, T real symmetric tridiagonal with off-diagonals |g| sqrt(N - k).
BlockResult scatter(const RealVector& p, double g_abs, int k_max) {
  BlockResult r;
  r.spectrum = RealVector::Zero(2 * k_max + 1);
  for (Eigen::Index n = 0; n < p.size(); ++n) {
    const double weight = p(n);
    if (weight == 0.0) continue;
    const int top = std::min<int>(k_max, static_cast<int>(n));
    const int size = top + k_max + 1;
    const int start = k_max;  // chain index of k = 0
    if (size == 1 || g_abs == 0.0) {
      r.spectrum(k_max) += weight;
      continue;
    }
    RealVector diag = RealVector::Zero(size);
    RealVector sub(size - 1);
    for (int j = 0; j + 1 < size; ++j) {
      const int k = j - k_max;  // k -> k+1 absorbs one of the n-k photons present at k
      sub(j) = g_abs * std::sqrt(static_cast<double>(n - k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const Eigen::MatrixXd& v = es.eigenvectors();
    const RealVector& lam = es.eigenvalues();
    // amplitude_j = sum_l V_jl exp(-i lam_l) V_start,l
    const ComplexVector phase = (lam.cast<Complex>() * Complex(0.0, -1.0)).array().exp().matrix();
    const ComplexVector coeff = phase.cwiseProduct(v.row(start).transpose().cast<Complex>());
    const ComplexVector amp = v.cast<Complex>() * coeff;
    for (int j = 0; j < size; ++j) r.spectrum(j) += weight * std::norm(amp(j));
    r.edge += weight * std::norm(amp(0));
    if (n > k_max) r.edge += weight * std::norm(amp(size - 1));
  }
  return r;
}

}  // namespace

PinemSpectrum pinem_spectrum(const DensityMatrix& rho, Complex g, std::optional<int> k_max) {
  const int dim = static_cast<int>(rho.rows());
  if (dim < 1 || rho.cols() != dim) throw DimensionError("pinem_spectrum: state must be square and non-empty");
  const int kmax = k_max ? *k_max : dim - 1;
  if (kmax < 0) throw DimensionError("pinem_spectrum: k_max must be non-negative");
  RealVector p = rho.diagonal().real();
  for (Eigen::Index n = 0; n < p.size(); ++n)
    if (p(n) < 0.0 && p(n) >= -1e-10) p(n) = 0.0;

  BlockResult r = scatter(p, std::abs(g), kmax);
  if (r.edge > edge_tolerance) {
    // Find how far the ladder has to reach before the ends are empty enough.
    int needed = std::max(kmax + 1, 1);
    for (int attempt = 0; attempt < 40; ++attempt) {
      if (scatter(p, std::abs(g), needed).edge <= edge_tolerance) break;
      needed = static_cast<int>(std::ceil(needed * 1.25)) + 1;
    }
    throw TruncationError("pinem_spectrum: " + std::to_string(r.edge) + " of the electron population reaches |k| = " +
                              std::to_string(kmax) + "; k_max >= " + std::to_string(needed) + " is required",
                          needed);
  }
  PinemSpectrum s;
  s.g = g;
  s.k_max = kmax;
  s.probabilities = r.spectrum;
  return s;
}

double discriminate(const PinemSpectrum& a, const PinemSpectrum& b) {
  if (a.k_max != b.k_max || a.probabilities.size() != b.probabilities.size())
    throw DimensionError("discriminate: spectra cover different k ranges (" + std::to_string(a.k_max) + " vs " +
                         std::to_string(b.k_max) + ")");
  return 0.5 * (a.probabilities - b.probabilities).cwiseAbs().sum();
}

void write_pinem_csv(std::ostream& out, const PinemSpectrum& s, const std::string& state) {
  out << "# g=" << fmt_num(s.g.real()) << (s.g.imag() < 0 ? "-" : "+") << fmt_num(std::abs(s.g.imag()))
      << "i state=" << state << " k_max=" << s.k_max << "\n";
  out << "k,P_k\n";
  for (int k = -s.k_max; k <= s.k_max; ++k) out << k << ',' << fmt_num(s.at(k)) << '\n';
}

}  // namespace kerrbic
