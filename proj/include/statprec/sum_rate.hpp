#pragma once

#include <vector>

#include "statprec/types.hpp"

namespace statprec {

// R = sum_j log2(1 + |h_j^T v_j|^2 / (sum_{j' != j} |h_j^T v_j'|^2 + noise_var)).
// Uses the plain transpose h^T, not h^H.
double sum_rate(const std::vector<CVec>& channels, const CMat& precoders, double noise_var);

// Gradient of sum_rate with respect to the precoders, as d/dRe + j d/dIm.
CMat sum_rate_gradient(const std::vector<CVec>& channels, const CMat& precoders, double noise_var);

// Upper bound J * log2(1 + rho * max_j ||h_j||^2 / noise_var) used as a sanity cap.
double single_user_rate_cap(const std::vector<CVec>& channels, double rho, double noise_var);

double total_power(const CMat& precoders);

}  // namespace statprec
