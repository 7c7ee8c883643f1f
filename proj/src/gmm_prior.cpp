#include "statprec/gmm_prior.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <omp.h>

namespace statprec {

namespace {

const double kLogPi = std::log(kPi);
// Posterior weights below exp(-700) are flushed to zero. Left alone they end up as
// subnormals and slow every later product over the data by an order of magnitude.
constexpr double kMinLogResponsibility = -700.0;

// First N columns of the unitary 2T-point DFT.
CMat half_dft(int t) {
  CMat q(2 * t, t);
  const double norm = 1.0 / std::sqrt(2.0 * t);
  for (int m = 0; m < 2 * t; ++m)
    for (int n = 0; n < t; ++n)
      q(m, n) = norm * std::polar(1.0, -2.0 * kPi * static_cast<double>((m * n) % (2 * t)) / (2 * t));
  return q;
}

bool is_power_of_two(int k) { return k >= 1 && std::has_single_bit(static_cast<unsigned>(k)); }

double log_det_from_llt(const Eigen::LLT<CMat>& llt) {
  double acc = 0.0;
  const CMat& l = llt.matrixLLT();
  for (Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i).real());
  return 2.0 * acc;
}

CMat stack_columns(const std::vector<CVec>& data, int n) {
  CMat h(n, static_cast<Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].size() != n)
      throw std::invalid_argument("fit_em: channel " + std::to_string(i) + " has length " +
                                  std::to_string(data[i].size()) + ", expected " +
                                  std::to_string(n));
    h.col(static_cast<Index>(i)) = data[i];
  }
  return h;
}

struct Posterior {
  double mean_log_likelihood = 0.0;
  RMat responsibilities;  // K x M
};

Posterior posterior(const RMat& log_densities) {
  const Index k = log_densities.rows();
  const Index m = log_densities.cols();
  Posterior out;
  out.responsibilities.resize(k, m);
  RVec per_sample(m);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < m; ++i) {
    const double peak = log_densities.col(i).maxCoeff();
    const double sum = (log_densities.col(i).array() - peak).exp().sum();
    const double ll = peak + std::log(sum);
    per_sample[i] = ll;
    out.responsibilities.col(i) = (log_densities.col(i).array() - ll).unaryExpr([](double x) {
      return x < kMinLogResponsibility ? 0.0 : std::exp(x);
    });
  }
  double total = 0.0;
  for (Index i = 0; i < m; ++i) total += per_sample[i];
  out.mean_log_likelihood = total / static_cast<double>(m);
  return out;
}

GmmModel m_step(const GmmModel& model, const CMat& data, const RMat& resp, SpectralUpdate update) {
  const SpectralDictionary& dict = model.dictionary();
  const int k_count = model.components();
  const double samples = static_cast<double>(data.cols());
  RVec weights(k_count);
  RMat spectra = model.spectra();
  const CMat& q = dict.matrix();
  const CMat q_adj = q.adjoint();

#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < k_count; ++k) {
    const RVec r = resp.row(k).transpose();
    const double mass = r.sum();
    weights[k] = mass / samples;
    if (!(mass > 0.0) || !std::isfinite(mass)) continue;
    const CMat weighted = data * r.cast<cplx>().asDiagonal();
    const CMat scatter = weighted * data.adjoint() / mass;

    RVec next;
    if (update == SpectralUpdate::kProjection) {
      next = dict.projection_spectrum(scatter);
    } else {
      const RVec& current = model.spectra().col(k);
      const CMat gain = model.factor(k).solve(q_adj);  // C_k^{-1} Q^H, N x L
      const CMat scatter_gain = scatter * gain;
      next.resize(current.size());
      for (Index m = 0; m < current.size(); ++m) {
        const double data_term = gain.col(m).dot(scatter_gain.col(m)).real();
        const double prior_term = q.row(m).dot(gain.col(m).conjugate()).real();
        // E[|s_m|^2 | h, k] averaged with responsibilities
        next[m] = current[m] + current[m] * current[m] * (data_term - prior_term);
      }
    }
    spectra.col(k) = next.cwiseMax(model.floor());
  }
  weights /= weights.sum();
  return GmmModel(dict, weights, spectra, model.floor());
}

EmResult run_em(const CMat& data, GmmModel model, const EmOptions& options) {
  if (options.max_iters < 0) throw std::invalid_argument("fit_em: max_iters must be >= 0");
  std::vector<double> history;
  Posterior post = posterior(detail::component_log_densities(model, data));
  history.push_back(post.mean_log_likelihood);
  if (options.on_iteration) options.on_iteration(0, post.mean_log_likelihood);

  int iterations = 0;
  bool converged = false;
  for (int it = 1; it <= options.max_iters; ++it) {
    GmmModel next = m_step(model, data, post.responsibilities, options.update);
    Posterior next_post = posterior(detail::component_log_densities(next, data));
    const double previous = history.back();
    history.push_back(next_post.mean_log_likelihood);
    if (options.on_iteration) options.on_iteration(it, next_post.mean_log_likelihood);
    if (!std::isfinite(next_post.mean_log_likelihood))
      throw std::runtime_error("fit_em: non-finite log-likelihood at iteration " +
                               std::to_string(it));
    model = std::move(next);
    post = std::move(next_post);
    iterations = it;
    const double gain = (history.back() - previous) / std::max(std::abs(previous), 1e-300);
    if (gain < options.tol) {
      converged = true;
      break;
    }
  }
  return EmResult{std::move(model), std::move(history), iterations, converged};
}

}  // namespace

SpectralDictionary::SpectralDictionary(const ArrayGeometry& geometry) : geometry_(geometry) {
  geometry_.validate();
  if (geometry_.kind == ArrayKind::kUla)
    q_ = half_dft(geometry_.n_h);
  else
    q_ = kron(half_dft(geometry_.n_v), half_dft(geometry_.n_h));
}

CMat SpectralDictionary::realize(const RVec& spectrum) const {
  if (spectrum.size() != spectrum_length())
    throw std::invalid_argument("realize_covariance: spectrum has length " +
                                std::to_string(spectrum.size()) + ", expected " +
                                std::to_string(spectrum_length()));
  if (spectrum.minCoeff() < -1e-12)
    throw std::invalid_argument("realize_covariance: negative spectrum entry");

  const int n = antennas();
  if (geometry_.kind == ArrayKind::kUla) {
    // row[d] = sum_m q_m exp(-j 2 pi m d / 2N) / 2N
    CVec row = CVec::Zero(n);
    const int l = 2 * n;
    for (int d = 0; d < n; ++d) {
      cplx acc(0.0, 0.0);
      for (int m = 0; m < l; ++m)
        acc += spectrum[m] * std::polar(1.0, -2.0 * kPi * static_cast<double>((m * d) % l) / l);
      row[d] = acc / static_cast<double>(l);
    }
    return hermitian_toeplitz(row);
  }

  // t(a, b) for offsets a = v' - v, b = h' - h.
  const int nv = geometry_.n_v, nh = geometry_.n_h;
  const int lv = 2 * nv, lh = 2 * nh;
  auto wrap = [](long x, long period) { return ((x % period) + period) % period; };
  CMat partial(lv, 2 * nh - 1);  // over m2 for each (m1, b)
  for (int m1 = 0; m1 < lv; ++m1)
    for (int b = -(nh - 1); b <= nh - 1; ++b) {
      cplx acc(0.0, 0.0);
      for (int m2 = 0; m2 < lh; ++m2)
        acc += spectrum[m1 * lh + m2] *
               std::polar(1.0, -2.0 * kPi * static_cast<double>(wrap(static_cast<long>(m2) * b, lh)) / lh);
      partial(m1, b + nh - 1) = acc;
    }
  CMat offsets(2 * nv - 1, 2 * nh - 1);
  for (int a = -(nv - 1); a <= nv - 1; ++a)
    for (int b = 0; b < 2 * nh - 1; ++b) {
      cplx acc(0.0, 0.0);
      for (int m1 = 0; m1 < lv; ++m1)
        acc += partial(m1, b) *
               std::polar(1.0, -2.0 * kPi * static_cast<double>(wrap(static_cast<long>(m1) * a, lv)) / lv);
      offsets(a + nv - 1, b) = acc / static_cast<double>(lv * lh);
    }
  CMat c(n, n);
  for (int v = 0; v < nv; ++v)
    for (int h = 0; h < nh; ++h)
      for (int v2 = 0; v2 < nv; ++v2)
        for (int h2 = 0; h2 < nh; ++h2)
          c(v * nh + h, v2 * nh + h2) = offsets(v2 - v + nv - 1, h2 - h + nh - 1);
  for (int i = 0; i < n; ++i) c(i, i) = cplx(c(i, i).real(), 0.0);
  return c;
}

RVec SpectralDictionary::projection_spectrum(const CMat& covariance) const {
  const CMat projected = q_ * covariance;
  RVec out(spectrum_length());
  for (Index m = 0; m < out.size(); ++m)
    out[m] = projection_gain() * projected.row(m).dot(q_.row(m)).real();
  return out;
}

CMat realize_covariance(const SpectralDictionary& dictionary, const RVec& spectrum) {
  return dictionary.realize(spectrum);
}

CVec first_row(const CMat& covariance) { return covariance.row(0).transpose(); }

CMat complete_from_first_row(const ArrayGeometry& geometry, const CVec& row) {
  geometry.validate();
  if (row.size() != geometry.antennas())
    throw std::invalid_argument("complete_from_first_row: row length does not match geometry");
  if (geometry.kind == ArrayKind::kUla) return hermitian_toeplitz(row);

  const int nv = geometry.n_v, nh = geometry.n_h, n = geometry.antennas();
  auto r = [&](int a, int b) { return row[a * nh + b]; };
  const double origin = row[0].real();
  CMat c(n, n);
  for (int v = 0; v < nv; ++v)
    for (int h = 0; h < nh; ++h)
      for (int v2 = 0; v2 < nv; ++v2)
        for (int h2 = 0; h2 < nh; ++h2) {
          const int da = v2 - v, db = h2 - h;
          cplx value;
          if (da >= 0 && db >= 0) {
            value = r(da, db);
          } else if (da <= 0 && db <= 0) {
            value = std::conj(r(-da, -db));
          } else if (origin == 0.0) {
            value = 0.0;
          } else if (da > 0) {  // db < 0
            value = r(da, 0) * std::conj(r(0, -db)) / origin;
          } else {  // da < 0, db > 0
            value = std::conj(r(-da, 0)) * r(0, db) / origin;
          }
          c(v * nh + h, v2 * nh + h2) = value;
        }
  return c;
}

GmmModel::GmmModel(SpectralDictionary dictionary, RVec weights, RMat spectra, double floor)
    : dictionary_(std::move(dictionary)),
      weights_(std::move(weights)),
      spectra_(std::move(spectra)),
      floor_(floor) {
  const int k = static_cast<int>(weights_.size());
  if (!is_power_of_two(k))
    throw std::invalid_argument("GmmModel: component count must be a power of two, got " +
                                std::to_string(k));
  if (spectra_.cols() != k || spectra_.rows() != dictionary_.spectrum_length())
    throw std::invalid_argument("GmmModel: spectra must be L x K");
  if (!(floor_ > 0.0)) throw std::invalid_argument("GmmModel: spectral floor must be positive");
  if (!weights_.allFinite() || weights_.minCoeff() < 0.0)
    throw std::invalid_argument("GmmModel: weights must be finite and nonnegative");
  if (std::abs(weights_.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("GmmModel: weights must sum to one");
  if (!spectra_.allFinite() || spectra_.minCoeff() < floor_ * (1.0 - 1e-12))
    throw std::invalid_argument("GmmModel: spectra must be finite and above the floor");

  covariances_.reserve(static_cast<std::size_t>(k));
  factors_.reserve(static_cast<std::size_t>(k));
  log_dets_.resize(k);
  for (int i = 0; i < k; ++i) {
    covariances_.push_back(dictionary_.realize(spectra_.col(i)));
    factors_.emplace_back(covariances_.back());
    if (factors_.back().info() != Eigen::Success)
      throw std::runtime_error("GmmModel: covariance " + std::to_string(i) +
                               " is not positive definite");
    log_dets_[i] = log_det_from_llt(factors_.back());
  }
}

int GmmModel::bits() const { return std::countr_zero(static_cast<unsigned>(components())); }

RVec GmmModel::channel_log_scores(const CVec& h) const {
  if (h.size() != dictionary_.antennas())
    throw std::invalid_argument("feedback_index_csi: channel length does not match the model");
  const int n = dictionary_.antennas();
  RVec out(components());
  for (int k = 0; k < components(); ++k) {
    const CVec z = factors_[static_cast<std::size_t>(k)].matrixL().solve(h);
    out[k] = std::log(weights_[k]) - n * kLogPi - log_dets_[k] - z.squaredNorm();
  }
  return out;
}

namespace detail {
RMat component_log_densities(const GmmModel& model, const CMat& data) {
  const int k_count = model.components();
  const Index n = data.rows();
  RMat out(k_count, data.cols());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < k_count; ++k) {
    const CMat whitened = model.factor(k).matrixL().solve(data);
    const double offset = std::log(model.weights()[k]) - static_cast<double>(n) * kLogPi -
                          model.log_det(k);
    out.row(k) = (offset - whitened.colwise().squaredNorm().array()).matrix();
  }
  return out;
}
}  // namespace detail

namespace reference {
RMat component_log_densities(const GmmModel& model, const std::vector<CVec>& data) {
  const int k_count = model.components();
  RMat out(k_count, static_cast<Index>(data.size()));
  for (int k = 0; k < k_count; ++k) {
    Eigen::PartialPivLU<CMat> lu(model.covariance(k));
    const double log_det = std::log(std::abs(lu.determinant()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const CVec& h = data[i];
      const double quad = h.dot(lu.solve(h)).real();
      out(k, static_cast<Index>(i)) = std::log(model.weights()[k]) -
                                      static_cast<double>(h.size()) * kLogPi - log_det - quad;
    }
  }
  return out;
}
}  // namespace reference

EmResult fit_em(const std::vector<CVec>& data, int components,
                const SpectralDictionary& dictionary, const EmOptions& options, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("fit_em: empty dataset");
  if (!is_power_of_two(components))
    throw std::invalid_argument("fit_em: K must be a power of two, got " +
                                std::to_string(components));
  if (data.size() < static_cast<std::size_t>(components))
    throw std::invalid_argument("fit_em: need at least K samples");
  if (!(options.floor_rel > 0.0)) throw std::invalid_argument("fit_em: floor_rel must be positive");

  const CMat h = stack_columns(data, dictionary.antennas());
  const CMat sample_cov = h * h.adjoint() / static_cast<double>(h.cols());
  const RVec global = dictionary.projection_spectrum(sample_cov).cwiseMax(0.0);
  const double floor = options.floor_rel * global.mean();
  if (!(floor > 0.0)) throw std::invalid_argument("fit_em: all-zero dataset");

  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  RMat spectra(dictionary.spectrum_length(), components);
  for (int k = 0; k < components; ++k)
    for (Index m = 0; m < spectra.rows(); ++m)
      spectra(m, k) = std::max(floor, global[m] * (1.0 + jitter(rng)));
  RVec weights = RVec::Constant(components, 1.0 / components);
  GmmModel start(dictionary, weights, spectra, floor);
  return run_em(h, std::move(start), options);
}

EmResult continue_em(const std::vector<CVec>& data, const GmmModel& start,
                     const EmOptions& options) {
  if (data.empty()) throw std::invalid_argument("fit_em: empty dataset");
  return run_em(stack_columns(data, start.dictionary().antennas()), start, options);
}

double mean_log_likelihood(const GmmModel& model, const std::vector<CVec>& data) {
  if (data.empty()) throw std::invalid_argument("mean_log_likelihood: empty dataset");
  return posterior(detail::component_log_densities(
                       model, stack_columns(data, model.dictionary().antennas())))
      .mean_log_likelihood;
}

RVec normalize_log_scores(const RVec& log_scores) {
  if (log_scores.size() == 0) throw std::invalid_argument("normalize_log_scores: empty input");
  for (Index i = 0; i < log_scores.size(); ++i)
    if (std::isnan(log_scores[i])) throw std::invalid_argument("responsibilities: NaN score");
  const double peak = log_scores.maxCoeff();
  if (!std::isfinite(peak)) throw std::invalid_argument("responsibilities: no finite score");
  RVec p = (log_scores.array() - peak).exp().matrix();
  return p / p.sum();
}

int argmax_first(const RVec& scores) {
  int best = 0;
  for (Index i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  return best;
}

std::shared_ptr<const ProjectedModel> project_model(const GmmModel& model,
                                                    const PilotMatrix& pilots) {
  if (pilots.matrix.cols() != model.dictionary().antennas())
    throw std::invalid_argument("ObservationCache: pilot matrix does not match model size");
  auto out = std::make_shared<ProjectedModel>();
  out->pilots = pilots.pilots();
  const CMat& p = pilots.matrix;
  for (int k = 0; k < model.components(); ++k) {
    const CMat pc = p * model.covariance(k);
    out->observation_covariances.push_back(pc * p.adjoint());
    out->gains.push_back(pc.adjoint());
  }
  return out;
}

ObservationCache::ObservationCache(const GmmModel& model, const PilotMatrix& pilots,
                                   double noise_var)
    : ObservationCache(model, project_model(model, pilots), noise_var) {}

ObservationCache::ObservationCache(const GmmModel& model,
                                   std::shared_ptr<const ProjectedModel> projected,
                                   double noise_var)
    : model_(&model), projected_(std::move(projected)), noise_var_(noise_var) {
  if (!projected_ ||
      static_cast<int>(projected_->observation_covariances.size()) != model.components())
    throw std::invalid_argument("ObservationCache: projection does not match the model");
  if (noise_var < 0.0) throw std::invalid_argument("ObservationCache: negative noise variance");
  const int k_count = model.components();
  factors_.resize(static_cast<std::size_t>(k_count));
  log_dets_.resize(k_count);
  log_weights_ = model.weights().array().log().matrix();
  for (int k = 0; k < k_count; ++k) {
    CMat obs_cov = projected_->observation_covariances[static_cast<std::size_t>(k)];
    obs_cov.diagonal().array() += noise_var;
    auto& llt = factors_[static_cast<std::size_t>(k)];
    llt.compute(obs_cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("ObservationCache: singular observation covariance for component " +
                               std::to_string(k));
    log_dets_[k] = log_det_from_llt(llt);
  }
}

RVec ObservationCache::log_scores(const CVec& y) const {
  if (y.size() != pilots())
    throw std::invalid_argument("responsibilities: observation length does not match n_p");
  if (!y.allFinite()) throw std::invalid_argument("responsibilities: non-finite observation");
  RVec out(log_dets_.size());
  for (Index k = 0; k < out.size(); ++k) {
    const CVec z = factors_[static_cast<std::size_t>(k)].matrixL().solve(y);
    out[k] = log_weights_[k] - pilots() * kLogPi - log_dets_[k] - z.squaredNorm();
  }
  return out;
}

RVec ObservationCache::responsibilities(const CVec& y) const {
  return normalize_log_scores(log_scores(y));
}

int ObservationCache::feedback_index(const CVec& y) const { return argmax_first(log_scores(y)); }

CVec ObservationCache::estimate(const CVec& y) const {
  const RVec p = responsibilities(y);
  CVec out = CVec::Zero(model_->dictionary().antennas());
  for (Index k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    const auto& gain = projected_->gains[static_cast<std::size_t>(k)];
    out += p[k] * (gain * factors_[static_cast<std::size_t>(k)].solve(y));
  }
  return out;
}

RVec responsibilities_obs(const ObservationCache& cache, const CVec& y) {
  return cache.responsibilities(y);
}

int feedback_index_obs(const ObservationCache& cache, const CVec& y) {
  return cache.feedback_index(y);
}

int feedback_index_csi(const GmmModel& model, const CVec& h) {
  return argmax_first(model.channel_log_scores(h));
}

CVec gmm_channel_estimate(const ObservationCache& cache, const CVec& y) {
  return cache.estimate(y);
}

}  // namespace statprec
