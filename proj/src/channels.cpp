#include "statprec/channels.hpp"

#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace statprec {

namespace {

constexpr std::size_t kChunk = 256;

// First row of the Toeplitz covariance of one ULA dimension.
CVec laplacian_first_row(int n, double spacing, double centre, double spread, int grid_size) {
  const double step = kPi / grid_size;
  const double decay = std::sqrt(2.0) / spread;
  std::vector<double> angles;
  std::vector<double> weights;
  angles.reserve(grid_size);
  weights.reserve(grid_size);
  double total = 0.0;
  for (int g = 0; g < grid_size; ++g) {
    const double offset = (g - grid_size / 2) * step;
    const double theta = centre + offset;
    if (theta < -kPi / 2 || theta >= kPi / 2) continue;
    const double w = std::exp(-decay * std::abs(offset));
    if (w == 0.0) continue;
    angles.push_back(theta);
    weights.push_back(w);
    total += w;
  }
  if (total == 0.0) throw std::invalid_argument("cluster_covariance: empty angular grid");

  CVec row = CVec::Zero(n);
  for (std::size_t g = 0; g < angles.size(); ++g) {
    const double phase = 2.0 * kPi * spacing * std::sin(angles[g]);
    const double w = weights[g] / total;
    for (int m = 0; m < n; ++m) row[m] += w * std::polar(1.0, -phase * m);
  }
  row[0] = cplx(row[0].real(), 0.0);
  return row;
}

void fill_chunk(const ArrayGeometry& geometry, const ChannelModel& model, std::uint64_t seed,
                std::size_t chunk, std::size_t begin, std::size_t end, std::vector<CVec>& out) {
  Rng rng(derive_seed(seed, chunk));
  for (std::size_t m = begin; m < end; ++m) {
    const ClusterParameters cluster = model.draw_cluster(geometry, rng);
    out[m] = sample_channel(cluster_covariance(geometry, cluster, model.grid_size), rng);
  }
}

}  // namespace

ArrayGeometry ArrayGeometry::ula(int n) {
  ArrayGeometry g;
  g.kind = ArrayKind::kUla;
  g.n_v = 1;
  g.n_h = n;
  g.validate();
  return g;
}

ArrayGeometry ArrayGeometry::ura(int n_v, int n_h) {
  ArrayGeometry g;
  g.kind = ArrayKind::kUra;
  g.n_v = n_v;
  g.n_h = n_h;
  g.validate();
  return g;
}

void ArrayGeometry::validate() const {
  if (n_v < 1 || n_h < 1) throw std::invalid_argument("geometry: antenna counts must be >= 1");
  if (kind == ArrayKind::kUla && n_v != 1)
    throw std::invalid_argument("geometry: a ULA has a single row (n_v == 1)");
  if (!(spacing_h > 0.0) || !(spacing_v > 0.0))
    throw std::invalid_argument("geometry: element spacing must be positive");
}

std::string ArrayGeometry::tag() const { return kind == ArrayKind::kUla ? "ula" : "ura"; }

ArrayGeometry parse_geometry(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("geometry '" + text + "': expected ula:<N> or ura:<Nv>x<Nh>");
  const std::string kind = text.substr(0, colon);
  const std::string dims = text.substr(colon + 1);
  try {
    if (kind == "ula") {
      std::size_t used = 0;
      const int n = std::stoi(dims, &used);
      if (used != dims.size()) throw std::invalid_argument("trailing characters");
      return ArrayGeometry::ula(n);
    }
    if (kind == "ura") {
      const auto x = dims.find('x');
      if (x == std::string::npos) throw std::invalid_argument("missing 'x'");
      std::size_t used_v = 0, used_h = 0;
      const std::string v = dims.substr(0, x), h = dims.substr(x + 1);
      const int nv = std::stoi(v, &used_v);
      const int nh = std::stoi(h, &used_h);
      if (used_v != v.size() || used_h != h.size())
        throw std::invalid_argument("trailing characters");
      return ArrayGeometry::ura(nv, nh);
    }
  } catch (const std::logic_error& e) {
    throw std::invalid_argument("geometry '" + text + "': " + e.what());
  }
  throw std::invalid_argument("geometry '" + text + "': unknown array kind '" + kind + "'");
}

std::string format_geometry(const ArrayGeometry& geometry) {
  if (geometry.kind == ArrayKind::kUla) return "ula:" + std::to_string(geometry.n_h);
  return "ura:" + std::to_string(geometry.n_v) + "x" + std::to_string(geometry.n_h);
}

ClusterParameters ChannelModel::draw_cluster(const ArrayGeometry& geometry, Rng& rng) const {
  std::uniform_real_distribution<double> az(-azimuth_range, azimuth_range);
  ClusterParameters p;
  p.azimuth = az(rng);
  if (geometry.kind == ArrayKind::kUra) {
    std::uniform_real_distribution<double> el(-elevation_range, elevation_range);
    p.elevation = el(rng);
  }
  p.spread = angular_spread;
  return p;
}

CVec ula_steering(int n, double spacing, double angle) {
  CVec a(n);
  const double phase = 2.0 * kPi * spacing * std::sin(angle);
  for (int m = 0; m < n; ++m) a[m] = std::polar(1.0, phase * m);
  return a;
}

CMat hermitian_toeplitz(const CVec& row) {
  const Index n = row.size();
  CMat c(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = i; k < n; ++k) {
      c(i, k) = row[k - i];
      c(k, i) = std::conj(row[k - i]);
    }
    c(i, i) = cplx(row[0].real(), 0.0);
  }
  return c;
}

CMat kron(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CMat cluster_covariance(const ArrayGeometry& geometry, const ClusterParameters& params,
                        int grid_size) {
  geometry.validate();
  if (!(params.spread > 0.0))
    throw std::invalid_argument("cluster_covariance: angular spread must be positive");
  if (grid_size < kMinGridSize)
    throw std::invalid_argument("cluster_covariance: grid_size must be >= " +
                                std::to_string(kMinGridSize));

  const CMat horizontal = hermitian_toeplitz(laplacian_first_row(
      geometry.n_h, geometry.spacing_h, params.azimuth, params.spread, grid_size));
  if (geometry.kind == ArrayKind::kUla) return horizontal;

  const CMat vertical = hermitian_toeplitz(laplacian_first_row(
      geometry.n_v, geometry.spacing_v, params.elevation, params.spread, grid_size));
  return kron(vertical, horizontal);
}

CovarianceFactor::CovarianceFactor(const CMat& covariance) {
  if (covariance.rows() != covariance.cols())
    throw std::invalid_argument("CovarianceFactor: covariance must be square");
  Eigen::LLT<CMat> llt(covariance);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
    return;
  }
  Eigen::SelfAdjointEigenSolver<CMat> eig(covariance);
  const RVec& values = eig.eigenvalues();
  const double scale = std::max(covariance.norm(), std::numeric_limits<double>::min());
  if (values.minCoeff() < -1e-8 * scale)
    throw std::invalid_argument("CovarianceFactor: covariance is not positive semidefinite");
  const double cutoff = 1e-12 * std::max(values.maxCoeff(), 0.0);
  RVec roots(values.size());
  for (Index i = 0; i < values.size(); ++i)
    roots[i] = values[i] > cutoff ? std::sqrt(values[i]) : 0.0;
  factor_ = eig.eigenvectors() * roots.asDiagonal();
}

CVec CovarianceFactor::draw(Rng& rng) const {
  return factor_ * complex_normal(factor_.cols(), 1.0, rng);
}

CVec sample_channel(const CMat& covariance, Rng& rng) {
  return CovarianceFactor(covariance).draw(rng);
}

std::vector<CVec> Scenario::channels() const {
  std::vector<CVec> out;
  out.reserve(users.size());
  for (const auto& u : users) out.push_back(u.channel);
  return out;
}

std::vector<CVec> Scenario::genie_rows() const {
  std::vector<CVec> out;
  out.reserve(users.size());
  for (const auto& u : users) out.push_back(u.genie_row);
  return out;
}

std::vector<CVec> generate_dataset(const ArrayGeometry& geometry, std::size_t count,
                                   const ChannelModel& model, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  geometry.validate();
  std::vector<CVec> out(count);
  const auto chunks = static_cast<std::int64_t>((count + kChunk - 1) / kChunk);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < chunks; ++c) {
    try {
      const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
      fill_chunk(geometry, model, seed, static_cast<std::size_t>(c), begin,
                 std::min(count, begin + kChunk), out);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

namespace reference {
std::vector<CVec> generate_dataset(const ArrayGeometry& geometry, std::size_t count,
                                   const ChannelModel& model, std::uint64_t seed) {
  std::vector<CVec> out(count);
  for (std::size_t c = 0; c * kChunk < count; ++c)
    fill_chunk(geometry, model, seed, c, c * kChunk, std::min(count, (c + 1) * kChunk), out);
  return out;
}
}  // namespace reference

std::vector<Scenario> generate_scenarios(const ArrayGeometry& geometry, std::size_t count,
                                         int users, const ChannelModel& model,
                                         std::uint64_t seed) {
  if (count < 1 || users < 1)
    throw std::invalid_argument("generate_scenarios: D and J must be >= 1");
  geometry.validate();
  std::vector<Scenario> out(count);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t d = 0; d < static_cast<std::int64_t>(count); ++d) {
    try {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(d)));
      Scenario& s = out[static_cast<std::size_t>(d)];
      s.users.resize(static_cast<std::size_t>(users));
      for (auto& u : s.users) {
        u.cluster = model.draw_cluster(geometry, rng);
        const CMat c = cluster_covariance(geometry, u.cluster, model.grid_size);
        u.genie_row = c.row(0).transpose();
        u.channel = sample_channel(c, rng);
      }
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void refresh_genie_rows(std::vector<Scenario>& scenarios, const ArrayGeometry& geometry,
                        const ChannelModel& model) {
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t d = 0; d < static_cast<std::int64_t>(scenarios.size()); ++d)
    for (auto& u : scenarios[static_cast<std::size_t>(d)].users)
      u.genie_row = cluster_covariance(geometry, u.cluster, model.grid_size).row(0).transpose();
}

double normalize_dataset(std::vector<CVec>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("normalize_dataset: empty dataset");
  double energy = 0.0;
  for (const auto& h : dataset) energy += h.squaredNorm();
  const double mean = energy / static_cast<double>(dataset.size());
  if (!(mean > 0.0)) throw std::invalid_argument("normalize_dataset: all-zero dataset");
  const double n = static_cast<double>(dataset.front().size());
  const double scale = std::sqrt(n / mean);
  for (auto& h : dataset) h *= scale;
  return scale;
}

}  // namespace statprec
