#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statprec/rng.hpp"
#include "statprec/types.hpp"

namespace statprec {

enum class ArrayKind { kUla, kUra };

// Antenna array at the base station. URA elements are indexed (v, h) -> v * n_h + h.
struct ArrayGeometry {
  ArrayKind kind = ArrayKind::kUla;
  int n_v = 1;
  int n_h = 1;
  double spacing_h = 0.5;  // wavelengths
  double spacing_v = 1.0;

  static ArrayGeometry ula(int n);
  static ArrayGeometry ura(int n_v, int n_h);

  int antennas() const { return n_v * n_h; }
  void validate() const;
  std::string tag() const;  // "ula" or "ura"
  bool operator==(const ArrayGeometry&) const = default;
};

// Parses "ula:<N>" or "ura:<Nv>x<Nh>".
ArrayGeometry parse_geometry(const std::string& text);
std::string format_geometry(const ArrayGeometry& geometry);

struct ClusterParameters {
  double azimuth = 0.0;    // rad, in [-pi/2, pi/2)
  double elevation = 0.0;  // rad, URA only
  double spread = deg_to_rad(2.0);
  double power = 1.0;
};

// Single-cluster angular model; every user draws a fresh cluster centre.
struct ChannelModel {
  double angular_spread = deg_to_rad(2.0);
  int grid_size = 720;
  double azimuth_range = deg_to_rad(60.0);    // centres uniform in [-range, range]
  double elevation_range = deg_to_rad(15.0);

  ClusterParameters draw_cluster(const ArrayGeometry& geometry, Rng& rng) const;
};

inline constexpr int kMinGridSize = 64;

// Steering vector exp(j 2 pi d n sin(theta)) of a uniform linear array.
CVec ula_steering(int n, double spacing, double angle);

// Hermitian Toeplitz matrix with first row `row`.
CMat hermitian_toeplitz(const CVec& row);

CMat kron(const CMat& a, const CMat& b);

// Covariance sum_g w_g a(theta_g) a(theta_g)^H of a truncated Laplacian cluster,
// normalised to trace N. The grid is centred on the cluster angle.
CMat cluster_covariance(const ArrayGeometry& geometry, const ClusterParameters& params,
                        int grid_size = 720);

// Reusable square-root factor of a PSD covariance (Cholesky, eigen fallback).
class CovarianceFactor {
 public:
  explicit CovarianceFactor(const CMat& covariance);

  CVec draw(Rng& rng) const;
  const CMat& factor() const { return factor_; }

 private:
  CMat factor_;
};

CVec sample_channel(const CMat& covariance, Rng& rng);

struct UserSample {
  CVec channel;
  ClusterParameters cluster;
  CVec genie_row;  // first row of the generating covariance
};

struct Scenario {
  std::vector<UserSample> users;

  int user_count() const { return static_cast<int>(users.size()); }
  std::vector<CVec> channels() const;
  std::vector<CVec> genie_rows() const;
};

// M channels, each from a freshly drawn cluster. Work is split into fixed-size
// chunks with derived seeds, so the output does not depend on the thread count.
std::vector<CVec> generate_dataset(const ArrayGeometry& geometry, std::size_t count,
                                   const ChannelModel& model, std::uint64_t seed);

std::vector<Scenario> generate_scenarios(const ArrayGeometry& geometry, std::size_t count,
                                         int users, const ChannelModel& model,
                                         std::uint64_t seed);

// Rebuilds user samples' genie rows from their cluster parameters.
void refresh_genie_rows(std::vector<Scenario>& scenarios, const ArrayGeometry& geometry,
                        const ChannelModel& model);

// Scales all channels by one factor so that mean ||h||^2 == N. Returns the factor.
double normalize_dataset(std::vector<CVec>& dataset);

namespace reference {
std::vector<CVec> generate_dataset(const ArrayGeometry& geometry, std::size_t count,
                                   const ChannelModel& model, std::uint64_t seed);
}  // namespace reference

}  // namespace statprec
