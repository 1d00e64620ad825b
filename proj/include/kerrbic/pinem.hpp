#pragma once

#include "kerrbic/core.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace kerrbic {

/// Electron energy spectrum after one pass: probabilities(k + k_max) for k in [-k_max, k_max],
/// k > 0 meaning the electron gained k photon energies.
struct PinemSpectrum {
  Complex g{0.0, 0.0};
  int k_max = 0;
  RealVector probabilities;

  double at(int k) const { return (k < -k_max || k > k_max) ? 0.0 : probabilities(k + k_max); }
  double total() const { return probabilities.sum(); }
};

/// Scattering by S = exp(g a b^dagger - g* a^dagger b) with the electron starting at k = 0,
/// b^dagger raising the electron energy by one photon. n + k is conserved, so the spectrum
/// depends only on the photon distribution and each excitation block is a tridiagonal
/// Hermitian problem solved exactly. The cavity is padded internally by k_max levels, so the
/// only truncation is the electron ladder; a TruncationError carrying the k_max needed is
/// thrown when more than 1e-8 reaches its ends.
/// k_max defaults to dim - 1.
PinemSpectrum pinem_spectrum(const DensityMatrix& rho, Complex g, std::optional<int> k_max = std::nullopt);

/// Total-variation distance 1/2 sum |P_a - P_b|. Throws DimensionError on different k ranges.
double discriminate(const PinemSpectrum& a, const PinemSpectrum& b);

/// Header comment with g and the state description, then "k,P_k" rows.
void write_pinem_csv(std::ostream& out, const PinemSpectrum& s, const std::string& state);

}  // namespace kerrbic
