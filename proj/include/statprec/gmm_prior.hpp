#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "statprec/channels.hpp"
#include "statprec/pilots.hpp"

namespace statprec {

// Structured covariance dictionary C = Q^H diag(q) Q.
//   ULA: Q holds the first N columns of the unitary 2N-point DFT (2N x N).
//   URA: Q = Q_v kron Q_h with Q_T the first T columns of the unitary 2T-point DFT (4N x N).
// Q^H Q = I_N, so a constant spectrum c realises c * I_N.
class SpectralDictionary {
 public:
  explicit SpectralDictionary(const ArrayGeometry& geometry);

  const ArrayGeometry& geometry() const { return geometry_; }
  int antennas() const { return geometry_.antennas(); }
  int spectrum_length() const { return static_cast<int>(q_.rows()); }
  // The constant c in Q^H Q = c I.
  double normalization() const { return 1.0; }
  // Spectrum length over N; maps diag(Q S Q^H) back onto the spectrum scale.
  double projection_gain() const { return static_cast<double>(spectrum_length()) / antennas(); }
  const CMat& matrix() const { return q_; }

  CMat realize(const RVec& spectrum) const;
  // (L / N) * diag(Q S Q^H) for a Hermitian S.
  RVec projection_spectrum(const CMat& covariance) const;

 private:
  ArrayGeometry geometry_;
  CMat q_;
};

CMat realize_covariance(const SpectralDictionary& dictionary, const RVec& spectrum);

CVec first_row(const CMat& covariance);

// Rebuilds a structured covariance from its first row. ULA: Hermitian Toeplitz.
// URA: two-level completion, exact for separable (Kronecker) covariances such as
// those produced by cluster_covariance.
CMat complete_from_first_row(const ArrayGeometry& geometry, const CVec& row);

// Zero-mean Gaussian mixture with structured covariances. Immutable after construction.
class GmmModel {
 public:
  GmmModel(SpectralDictionary dictionary, RVec weights, RMat spectra, double floor);

  const SpectralDictionary& dictionary() const { return dictionary_; }
  int components() const { return static_cast<int>(weights_.size()); }
  int bits() const;
  const RVec& weights() const { return weights_; }
  const RMat& spectra() const { return spectra_; }  // L x K, one column per component
  double floor() const { return floor_; }
  const CMat& covariance(int k) const { return covariances_[static_cast<std::size_t>(k)]; }
  CVec covariance_row(int k) const { return first_row(covariance(k)); }
  const Eigen::LLT<CMat>& factor(int k) const { return factors_[static_cast<std::size_t>(k)]; }
  double log_det(int k) const { return log_dets_[k]; }

  // log pi_k + log CN(h; 0, C_k) for every component.
  RVec channel_log_scores(const CVec& h) const;

 private:
  SpectralDictionary dictionary_;
  RVec weights_;
  RMat spectra_;
  double floor_;
  std::vector<CMat> covariances_;
  std::vector<Eigen::LLT<CMat>> factors_;
  RVec log_dets_;
};

enum class SpectralUpdate {
  // Exact EM on the latent spectral coefficients s with h = Q^H s, s ~ CN(0, diag(q)).
  // Never decreases the likelihood.
  kLatentSpectrum,
  // q[m] = (L / N) * weighted mean of |(Q h)[m]|^2. Cheaper, not monotone in general.
  kProjection,
};

struct EmOptions {
  int max_iters = 300;
  double tol = 1e-5;
  double floor_rel = 1e-6;  // floor = floor_rel * mean initial spectrum
  SpectralUpdate update = SpectralUpdate::kLatentSpectrum;
  // Called after every likelihood evaluation with (iteration, mean log-likelihood).
  std::function<void(int, double)> on_iteration;
};

struct EmResult {
  GmmModel model;
  std::vector<double> log_likelihood;  // mean per sample, entry 0 is the start point
  int iterations = 0;
  bool converged = false;
};

EmResult fit_em(const std::vector<CVec>& data, int components,
                const SpectralDictionary& dictionary, const EmOptions& options, Rng& rng);

// Continues EM from an existing model (checkpoint resume); keeps the model's floor.
EmResult continue_em(const std::vector<CVec>& data, const GmmModel& start,
                     const EmOptions& options);

// Mean log-likelihood of the data under the model.
double mean_log_likelihood(const GmmModel& model, const std::vector<CVec>& data);

// Log-sum-exp normalisation of log scores into probabilities.
RVec normalize_log_scores(const RVec& log_scores);

// Index of the largest entry; the smallest index wins ties.
int argmax_first(const RVec& scores);

// P C_k P^H and C_k P^H for every component of one (model, P); shared across noise levels.
struct ProjectedModel {
  int pilots = 0;
  std::vector<CMat> observation_covariances;
  std::vector<CMat> gains;
};

std::shared_ptr<const ProjectedModel> project_model(const GmmModel& model, const PilotMatrix& pilots);

// Per-component factorisations of P C_k P^H + noise_var I for one (P, noise_var).
class ObservationCache {
 public:
  ObservationCache(const GmmModel& model, const PilotMatrix& pilots, double noise_var);
  ObservationCache(const GmmModel& model, std::shared_ptr<const ProjectedModel> projected,
                   double noise_var);

  int pilots() const { return projected_->pilots; }
  double noise_var() const { return noise_var_; }
  const Eigen::LLT<CMat>& factor(int k) const { return factors_[static_cast<std::size_t>(k)]; }
  double log_det(int k) const { return log_dets_[k]; }

  // log pi_k + log CN(y; 0, P C_k P^H + noise_var I); O(K n_p^2).
  RVec log_scores(const CVec& y) const;
  RVec responsibilities(const CVec& y) const;
  int feedback_index(const CVec& y) const;
  // sum_k p(k|y) C_k P^H (P C_k P^H + noise_var I)^{-1} y
  CVec estimate(const CVec& y) const;

 private:
  const GmmModel* model_;
  std::shared_ptr<const ProjectedModel> projected_;
  double noise_var_;
  std::vector<Eigen::LLT<CMat>> factors_;
  RVec log_dets_;
  RVec log_weights_;
};

RVec responsibilities_obs(const ObservationCache& cache, const CVec& y);
int feedback_index_obs(const ObservationCache& cache, const CVec& y);
int feedback_index_csi(const GmmModel& model, const CVec& h);
CVec gmm_channel_estimate(const ObservationCache& cache, const CVec& y);

namespace reference {
// Sample-by-sample E-step: K x M matrix of log pi_k + log CN(h_i; 0, C_k).
RMat component_log_densities(const GmmModel& model, const std::vector<CVec>& data);
}  // namespace reference

namespace detail {
// OpenMP E-step kernel used by fit_em, exposed for testing and benchmarks.
RMat component_log_densities(const GmmModel& model, const CMat& data);
}  // namespace detail

}  // namespace statprec
