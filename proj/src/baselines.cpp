#include "statprec/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "statprec/sum_rate.hpp"

namespace statprec {

namespace {

constexpr int kMaxBracketDoublings = 60;

struct WmmseStatistics {
  CMat a;  // sum_j w_j |u_j|^2 conj(h_j) h_j^T
  CMat b;  // columns w_j conj(u_j) conj(h_j)
};

WmmseStatistics wmmse_statistics(const std::vector<CVec>& channels, const CMat& v,
                                 double noise_var) {
  const Index n = v.rows();
  const Index users = v.cols();
  WmmseStatistics st{CMat::Zero(n, n), CMat::Zero(n, users)};
  for (Index j = 0; j < users; ++j) {
    const CVec& h = channels[static_cast<std::size_t>(j)];
    const Eigen::RowVectorXcd g = h.transpose() * v;
    const double total = g.squaredNorm() + noise_var;
    const cplx u = std::conj(g[j]) / total;
    const double mse = std::max(1.0 - std::norm(g[j]) / total, 1e-300);
    const double w = 1.0 / mse;
    const CVec hc = h.conjugate();
    st.a.noalias() += (w * std::norm(u)) * hc * h.transpose();
    st.b.col(j) = (w * std::conj(u)) * hc;
  }
  return st;
}

}  // namespace

ChannelSampler::ChannelSampler(CMat covariance, std::uint64_t seed)
    : covariance_(std::move(covariance)), factor_(covariance_), rng_(seed) {}

CVec ChannelSampler::draw() { return factor_.draw(rng_); }

CMat power_constrained_update(const CMat& a, const CMat& b, double rho) {
  Eigen::SelfAdjointEigenSolver<CMat> eig(a);
  const RVec lambda = eig.eigenvalues().cwiseMax(0.0);
  const CMat c = eig.eigenvectors().adjoint() * b;
  const RVec energy = c.rowwise().squaredNorm();
  const double null_level = 1e-14 * std::max(lambda.maxCoeff(), 1e-300);
  const double energy_level = 1e-24 * std::max(energy.sum(), 1e-300);

  auto power = [&](double mu) {
    double p = 0.0;
    for (Index m = 0; m < lambda.size(); ++m) {
      const double denom = lambda[m] + mu;
      if (denom <= null_level) {
        if (energy[m] > energy_level) return std::numeric_limits<double>::infinity();
        continue;
      }
      p += energy[m] / (denom * denom);
    }
    return p;
  };
  auto solve = [&](double mu) {
    RVec scale(lambda.size());
    for (Index m = 0; m < lambda.size(); ++m) {
      const double denom = lambda[m] + mu;
      scale[m] = denom <= null_level ? 0.0 : 1.0 / denom;
    }
    return CMat(eig.eigenvectors() * (scale.asDiagonal() * c));
  };

  if (power(0.0) <= rho) return solve(0.0);

  double lo = 0.0;
  double hi = std::max(std::sqrt(energy.sum() / rho), 1e-300);
  int doublings = 0;
  while (!(power(hi) <= rho)) {
    if (++doublings > kMaxBracketDoublings)
      throw std::runtime_error("power_constrained_update: failed to bracket the multiplier");
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (power(mid) <= rho)
      hi = mid;
    else
      lo = mid;
  }
  return solve(hi);
}

CMat swmmse(std::vector<ChannelSampler>& samplers, double rho, double noise_var, int max_iters) {
  if (samplers.empty()) throw std::invalid_argument("swmmse: at least one user is required");
  if (max_iters < 1) throw std::invalid_argument("swmmse: I_max must be >= 1");
  if (!(noise_var > 0.0)) throw std::invalid_argument("swmmse: noise variance must be positive");
  const Index n = samplers.front().covariance().rows();
  const Index users = static_cast<Index>(samplers.size());

  // Start from the conjugate principal eigenvectors (statistical matched filters).
  CMat v(n, users);
  for (Index j = 0; j < users; ++j) {
    Eigen::SelfAdjointEigenSolver<CMat> eig(samplers[static_cast<std::size_t>(j)].covariance());
    v.col(j) = std::sqrt(rho / static_cast<double>(users)) *
               eig.eigenvectors().col(n - 1).conjugate();
  }

  CMat a_avg = CMat::Zero(n, n);
  CMat b_avg = CMat::Zero(n, users);
  std::vector<CVec> draws(static_cast<std::size_t>(users));
  for (int it = 1; it <= max_iters; ++it) {
    for (Index j = 0; j < users; ++j)
      draws[static_cast<std::size_t>(j)] = samplers[static_cast<std::size_t>(j)].draw();
    const WmmseStatistics st = wmmse_statistics(draws, v, noise_var);
    const double step = 1.0 / it;
    a_avg += step * (st.a - a_avg);
    b_avg += step * (st.b - b_avg);
    v = power_constrained_update(a_avg, b_avg, rho);
  }
  return v;
}

IwmmseResult iwmmse(const std::vector<CVec>& channels, double rho, double noise_var, int max_iters,
                    double tol) {
  if (channels.empty()) throw std::invalid_argument("iwmmse: at least one user is required");
  if (max_iters < 0) throw std::invalid_argument("iwmmse: I_max must be >= 0");
  if (!(noise_var > 0.0)) throw std::invalid_argument("iwmmse: noise variance must be positive");
  const Index n = channels.front().size();
  const Index users = static_cast<Index>(channels.size());
  CMat v = CMat::Zero(n, users);
  for (Index j = 0; j < users; ++j) {
    const CVec& h = channels[static_cast<std::size_t>(j)];
    if (h.size() != n) throw std::invalid_argument("iwmmse: channel lengths differ");
    const double norm = h.norm();
    if (norm > 0.0) v.col(j) = std::sqrt(rho / static_cast<double>(users)) * h.conjugate() / norm;
  }

  IwmmseResult result;
  result.rate_trace.push_back(sum_rate(channels, v, noise_var));
  for (int it = 1; it <= max_iters; ++it) {
    const WmmseStatistics st = wmmse_statistics(channels, v, noise_var);
    v = power_constrained_update(st.a, st.b, rho);
    const double rate = sum_rate(channels, v, noise_var);
    const double previous = result.rate_trace.back();
    result.rate_trace.push_back(rate);
    if (rate - previous < tol) break;
  }
  result.precoders = std::move(v);
  return result;
}

Codebook build_dft_codebook(const ArrayGeometry& geometry, int bits) {
  geometry.validate();
  if (bits < 0 || bits > 30) throw std::invalid_argument("build_dft_codebook: bits out of range");
  auto dft_words = [](int antennas, int count) {
    CMat w(antennas, count);
    const double norm = 1.0 / std::sqrt(static_cast<double>(antennas));
    for (int k = 0; k < count; ++k)
      for (int n = 0; n < antennas; ++n)
        w(n, k) = norm * std::polar(1.0, -2.0 * kPi *
                                             static_cast<double>((static_cast<long>(n) * k) % count) /
                                             count);
    return w;
  };

  Codebook cb;
  cb.geometry = geometry;
  if (geometry.kind == ArrayKind::kUla) {
    cb.words = dft_words(geometry.antennas(), 1 << bits);
    return cb;
  }
  const double log_n = std::log2(static_cast<double>(geometry.antennas()));
  if (log_n <= 0.0)
    throw std::invalid_argument("build_dft_codebook: cannot split bits for a single-element URA");
  const int bits_v = static_cast<int>(
      std::floor(bits * std::log2(static_cast<double>(geometry.n_v)) / log_n + 1e-12));
  const int bits_h = bits - bits_v;
  const CMat wv = dft_words(geometry.n_v, 1 << bits_v);
  const CMat wh = dft_words(geometry.n_h, 1 << bits_h);
  cb.words.resize(geometry.antennas(), wv.cols() * wh.cols());
  for (Index kv = 0; kv < wv.cols(); ++kv)
    for (Index kh = 0; kh < wh.cols(); ++kh)
      cb.words.col(kv * wh.cols() + kh) = kron(wv.col(kv), wh.col(kh));
  return cb;
}

int dft_feedback(const CVec& estimate, const Codebook& codebook) {
  if (estimate.size() != codebook.words.rows())
    throw std::invalid_argument("dft_feedback: estimate length does not match the codebook");
  const Eigen::VectorXcd corr = codebook.words.adjoint() * estimate;
  int best = 0;
  double best_value = std::abs(corr[0]);
  for (Index k = 1; k < corr.size(); ++k) {
    const double value = std::abs(corr[k]);
    if (value > best_value) {
      best_value = value;
      best = static_cast<int>(k);
    }
  }
  return best;
}

CVec ls_estimate(const PilotMatrix& pilots, const CVec& y) {
  const CMat& p = pilots.matrix;
  if (y.size() != p.rows())
    throw std::invalid_argument("ls_estimate: observation length does not match n_p");
  if (p.rowwise().squaredNorm().minCoeff() <= 0.0)
    throw std::invalid_argument("ls_estimate: pilot matrix has a zero row");
  const CMat gram = p * p.adjoint();
  return p.adjoint() * gram.llt().solve(y);
}

}  // namespace statprec
