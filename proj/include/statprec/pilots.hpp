#pragma once

#include "statprec/channels.hpp"

namespace statprec {

enum class PilotSelection {
  kLowestIndex,  // ULA: DFT rows 0..n_p-1; URA: diagonal-major 2D frequency order
  kEquispaced,   // ULA only: rows floor(i * N / n_p)
};

struct PilotMatrix {
  CMat matrix;  // n_p x N, rows orthogonal with squared norm rho
  double rho = 1.0;
  ArrayGeometry geometry;

  int pilots() const { return static_cast<int>(matrix.rows()); }
};

struct Observation {
  CVec y;
  double noise_var = 0.0;
};

// Unitary DFT matrix, F(k, n) = exp(-j 2 pi k n / size) / sqrt(size).
CMat unitary_dft(int size);

PilotMatrix build_pilot_matrix(const ArrayGeometry& geometry, int pilots, double rho = 1.0,
                               PilotSelection selection = PilotSelection::kLowestIndex);

// y = P h + n with n ~ CN(0, noise_var I).
Observation observe(const PilotMatrix& pilots, const CVec& channel, double noise_var, Rng& rng);

}  // namespace statprec
