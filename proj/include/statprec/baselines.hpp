#pragma once

#include <cstdint>
#include <vector>

#include "statprec/channels.hpp"
#include "statprec/pilots.hpp"

namespace statprec {

// Draws CN(0, C) samples for one user.
class ChannelSampler {
 public:
  ChannelSampler(CMat covariance, std::uint64_t seed);

  CVec draw();
  const CMat& covariance() const { return covariance_; }

 private:
  CMat covariance_;
  CovarianceFactor factor_;
  Rng rng_;
};

// Minimiser of sum_j v_j^H A v_j - 2 Re(b_j^H v_j) subject to sum_j ||v_j||^2 <= rho:
// V = (A + mu I)^{-1} B with mu >= 0 found by bisection.
CMat power_constrained_update(const CMat& a, const CMat& b, double rho);

// Stochastic WMMSE: every iteration draws one channel per user and solves the
// running-average weighted-MSE surrogate.
CMat swmmse(std::vector<ChannelSampler>& samplers, double rho, double noise_var, int max_iters);

struct IwmmseResult {
  CMat precoders;
  std::vector<double> rate_trace;  // sum-rate on the given channels, entry 0 = initial point
};

// Alternating WMMSE on channel estimates treated as exact; starts from matched filters.
IwmmseResult iwmmse(const std::vector<CVec>& channels, double rho, double noise_var, int max_iters,
                    double tol = 1e-9);

struct Codebook {
  ArrayGeometry geometry;
  CMat words;  // N x K, unit-norm columns

  int size() const { return static_cast<int>(words.cols()); }
};

// ULA: w_k[n] = exp(-j 2 pi n k / K) / sqrt(N). URA: w = w_v kron w_h with the bits split
// B_v = floor(B log2(N_v) / log2(N)), B_h = B - B_v.
Codebook build_dft_codebook(const ArrayGeometry& geometry, int bits);

// argmax_k |w_k^H h|, smallest index on ties.
int dft_feedback(const CVec& estimate, const Codebook& codebook);

// Minimum-norm least squares P^H (P P^H)^{-1} y.
CVec ls_estimate(const PilotMatrix& pilots, const CVec& y);

}  // namespace statprec
