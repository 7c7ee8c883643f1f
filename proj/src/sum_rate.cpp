#include "statprec/sum_rate.hpp"

#include <cmath>
#include <stdexcept>

namespace statprec {

namespace {

// g(j, j') = h_j^T v_j'
CMat effective_gains(const std::vector<CVec>& channels, const CMat& precoders) {
  const Index users = precoders.cols();
  if (static_cast<Index>(channels.size()) != users)
    throw std::invalid_argument("sum_rate: channel count does not match precoder columns");
  CMat g(users, users);
  for (Index j = 0; j < users; ++j) {
    if (channels[static_cast<std::size_t>(j)].size() != precoders.rows())
      throw std::invalid_argument("sum_rate: channel length does not match precoder rows");
    g.row(j) = channels[static_cast<std::size_t>(j)].transpose() * precoders;
  }
  return g;
}

}  // namespace

double sum_rate(const std::vector<CVec>& channels, const CMat& precoders, double noise_var) {
  if (!(noise_var > 0.0)) throw std::invalid_argument("sum_rate: noise variance must be positive");
  const CMat g = effective_gains(channels, precoders);
  double rate = 0.0;
  for (Index j = 0; j < g.rows(); ++j) {
    const double total = g.row(j).squaredNorm() + noise_var;
    const double signal = std::norm(g(j, j));
    rate += std::log2(total) - std::log2(total - signal);
  }
  return rate;
}

CMat sum_rate_gradient(const std::vector<CVec>& channels, const CMat& precoders,
                       double noise_var) {
  const CMat g = effective_gains(channels, precoders);
  const double inv_ln2 = 1.0 / std::log(2.0);
  CMat grad = CMat::Zero(precoders.rows(), precoders.cols());
  for (Index j = 0; j < g.rows(); ++j) {
    const double total = g.row(j).squaredNorm() + noise_var;
    const double interference = total - std::norm(g(j, j));
    const CVec h_conj = channels[static_cast<std::size_t>(j)].conjugate();
    for (Index k = 0; k < g.cols(); ++k) {
      // d R_j / d|g_jk|^2
      double coeff = inv_ln2 / total;
      if (k != j) coeff -= inv_ln2 / interference;
      // d|g|^2 / dv = 2 g conj(h)
      grad.col(k) += (2.0 * coeff * g(j, k)) * h_conj;
    }
  }
  return grad;
}

double single_user_rate_cap(const std::vector<CVec>& channels, double rho, double noise_var) {
  double best = 0.0;
  for (const auto& h : channels) best = std::max(best, h.squaredNorm());
  return static_cast<double>(channels.size()) * std::log2(1.0 + rho * best / noise_var);
}

double total_power(const CMat& precoders) { return precoders.squaredNorm(); }

}  // namespace statprec
