#include "statprec/pilots.hpp"

#include <algorithm>
#include <stdexcept>

namespace statprec {

CMat unitary_dft(int size) {
  CMat f(size, size);
  const double norm = 1.0 / std::sqrt(static_cast<double>(size));
  for (int k = 0; k < size; ++k)
    for (int n = 0; n < size; ++n)
      f(k, n) = norm * std::polar(1.0, -2.0 * kPi * static_cast<double>((k * n) % size) / size);
  return f;
}

PilotMatrix build_pilot_matrix(const ArrayGeometry& geometry, int pilots, double rho,
                               PilotSelection selection) {
  geometry.validate();
  const int n = geometry.antennas();
  if (pilots < 1 || pilots > n)
    throw std::invalid_argument("build_pilot_matrix: n_p must lie in [1, N], got " +
                                std::to_string(pilots));
  if (!(rho > 0.0)) throw std::invalid_argument("build_pilot_matrix: rho must be positive");

  std::vector<int> rows;
  rows.reserve(pilots);
  CMat full;
  if (geometry.kind == ArrayKind::kUla) {
    full = unitary_dft(n);
    for (int i = 0; i < pilots; ++i)
      rows.push_back(selection == PilotSelection::kEquispaced
                         ? static_cast<int>((static_cast<long>(i) * n) / pilots)
                         : i);
  } else {
    if (selection != PilotSelection::kLowestIndex)
      throw std::invalid_argument("build_pilot_matrix: equispaced selection is ULA-only");
    full = kron(unitary_dft(geometry.n_v), unitary_dft(geometry.n_h));
    std::vector<std::pair<int, int>> grid;
    for (int kv = 0; kv < geometry.n_v; ++kv)
      for (int kh = 0; kh < geometry.n_h; ++kh) grid.emplace_back(kv, kh);
    std::stable_sort(grid.begin(), grid.end(), [](const auto& a, const auto& b) {
      const int da = a.first + a.second, db = b.first + b.second;
      return da != db ? da < db : a.first < b.first;
    });
    for (int i = 0; i < pilots; ++i) rows.push_back(grid[i].first * geometry.n_h + grid[i].second);
  }

  PilotMatrix p;
  p.rho = rho;
  p.geometry = geometry;
  p.matrix.resize(pilots, n);
  for (int i = 0; i < pilots; ++i) p.matrix.row(i) = std::sqrt(rho) * full.row(rows[i]);
  return p;
}

Observation observe(const PilotMatrix& pilots, const CVec& channel, double noise_var, Rng& rng) {
  if (channel.size() != pilots.matrix.cols())
    throw std::invalid_argument("observe: channel length does not match the pilot matrix");
  if (noise_var < 0.0) throw std::invalid_argument("observe: noise variance must be >= 0");
  Observation obs;
  obs.noise_var = noise_var;
  obs.y = pilots.matrix * channel;
  if (noise_var > 0.0) obs.y += complex_normal(pilots.pilots(), noise_var, rng);
  return obs;
}

}  // namespace statprec
