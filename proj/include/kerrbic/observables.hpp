#pragma once

#include "kerrbic/core.hpp"

#include <iosfwd>
#include <utility>

namespace kerrbic {

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;
};

/// Photon-number mean and variance from the diagonal of rho.
MeanVar mean_var(const DensityMatrix& rho);
MeanVar mean_var(const RealVector& p);

/// 10 log10(var/mean): number squeezing in dB, negative below shot noise.
/// -infinity for a Fock state. Throws UndefinedObservableError when mean is 0.
double squeezing_db(const DensityMatrix& rho);
double squeezing_db(const RealVector& p);

/// <a+a+aa> / <a+a>^2. Throws UndefinedObservableError for the vacuum.
double g2_zero(const DensityMatrix& rho);
double g2_zero(const RealVector& p);

/// <n0|rho|n0>, zero when n0 lies outside the basis.
double fidelity_fock(const DensityMatrix& rho, int n0);

/// Raw diagonal. Entries in [-1e-10, 0) are clipped to 0; nothing is renormalised.
RealVector photon_distribution(const DensityMatrix& rho);

struct HusimiGrid {
  double re_min = -5.0, re_max = 5.0;
  double im_min = -5.0, im_max = 5.0;
  int re_count = 101, im_count = 101;
  /// values(i, j) = Q(re_j + i im_i), rows along Im alpha.
  Eigen::MatrixXd values;
  /// Set when the grid is smaller than sqrt(mean) + 5 var^{1/4}.
  bool radius_warning = false;

  double re_at(int j) const { return re_min + j * (re_max - re_min) / (re_count - 1); }
  double im_at(int i) const { return im_min + i * (im_max - im_min) / (im_count - 1); }
  double cell_area() const {
    return (re_max - re_min) / (re_count - 1) * (im_max - im_min) / (im_count - 1);
  }
  double normalisation() const { return values.sum() * cell_area(); }
};

/// Q(alpha) = <alpha|rho|alpha>/pi on the grid extents of `grid` (values are overwritten).
/// The coherent overlap only sees the truncated basis, so the error is bounded by the
/// state's tail mass beyond dim-1.
HusimiGrid husimi(const DensityMatrix& rho, HusimiGrid grid);

/// Square grid of half-width radius centred on the origin.
HusimiGrid husimi_grid(double radius, int count);

/// Two comment lines with the extents, then im_count rows of re_count values.
void write_husimi_csv(std::ostream& out, const HusimiGrid& q);

}  // namespace kerrbic
