#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "statprec/rng.hpp"
#include "statprec/types.hpp"

namespace statprec {

// Layer widths M_0..M_L of the edge-feature attention network (M_0 = M_L = 2).
struct GnnShape {
  int antennas = 0;
  std::vector<int> dims;
  double alpha = 0.0;
  double beta = 0.1;

  // alpha = 0.1 / antennas; `hidden_layers` layers of `width` plus the output layer.
  static GnnShape make(int antennas, int hidden_layers, int width, double beta = 0.1);

  int layers() const { return static_cast<int>(dims.size()) - 1; }
  void validate() const;
  std::size_t parameter_count() const;
  bool operator==(const GnnShape&) const = default;
};

struct LayerView {
  Eigen::Map<const RMat> s, t, q, k, u;
};

struct LayerMut {
  Eigen::Map<RMat> s, t, q, k, u;
};

// Parameters live in one flat vector, in this order (all column-major):
//   extractor weight W (2N x 2N), extractor bias b (2N), PReLU slope (1),
//   then for each layer l = 1..L: S, T, Q, K, U (M_l x M_{l-1}).
class GnnModel {
 public:
  GnnModel() = default;
  explicit GnnModel(GnnShape shape);  // all parameters zero

  const GnnShape& shape() const { return shape_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  Eigen::Map<const RMat> extractor_weight() const;
  Eigen::Map<const RVec> extractor_bias() const;
  double prelu_slope() const { return params_[slope_offset()]; }
  LayerView layer(int l) const;  // 0-based

  Eigen::Map<RMat> extractor_weight();
  Eigen::Map<RVec> extractor_bias();
  double& prelu_slope() { return params_[slope_offset()]; }
  LayerMut layer(int l);

  // Offset of layer l's S matrix in the flat vector.
  std::size_t layer_offset(int l) const;

 private:
  std::size_t slope_offset() const;

  GnnShape shape_;
  std::vector<double> params_;
};

// Glorot-uniform weights, zero extractor bias, PReLU slope 0.25.
GnnModel glorot_init(const GnnShape& shape, Rng& rng);

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, int layer) : std::runtime_error(what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

// Edge features are M x (N * J) matrices; column j * N + n holds f_nj.
RMat extract_features(const GnnModel& model, const std::vector<CVec>& rows);

// One edge-update layer: antenna aggregation scaled by alpha and linear attention over
// the other users scaled by beta, then ReLU (hidden) or identity (output).
RMat layer_forward(const RMat& features, const LayerView& layer, double alpha, double beta,
                   int antennas, bool relu);

// Edge-update layers and power normalisation applied to extracted features.
CMat forward_from_features(const GnnModel& model, RMat features, double rho);

// Precoders V = sqrt(rho) V' / ||V'||_F from per-user covariance first rows.
CMat forward(const GnnModel& model, const std::vector<CVec>& rows, double rho);

struct TrainingSample {
  std::vector<CVec> inputs;    // covariance first rows, one per user
  std::vector<CVec> channels;  // true channels used in the loss
  double noise_var = 1.0;
};

// Mean negative sum-rate over the batch; writes its exact gradient into `grad`.
double loss_and_gradient(const GnnModel& model, std::span<const TrainingSample> batch, double rho,
                         std::vector<double>& grad);

// Gradient of a single sample (no averaging).
double sample_loss_and_gradient(const GnnModel& model, const TrainingSample& sample, double rho,
                                std::span<double> grad);

namespace reference {
// Index-by-index loops over (n, j, i, k); no matrix products.
RMat layer_forward(const RMat& features, const LayerView& layer, double alpha, double beta,
                   int antennas, bool relu);
// Serial batch gradient without chunking.
double loss_and_gradient(const GnnModel& model, std::span<const TrainingSample> batch, double rho,
                         std::vector<double>& grad);
}  // namespace reference

// ---- training ----

struct TrainLogRow {
  int epoch = 0;
  double train_rate = 0.0;
  double val_rate = 0.0;
  double learning_rate = 0.0;
};

struct TrainConfig {
  int epochs = 500;
  int batch_size = 100;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double snr_min_db = 0.0;
  double snr_max_db = 20.0;
  double rho = 1.0;
  std::uint64_t seed = 1;
  std::function<void(const TrainLogRow&)> on_epoch;
};

// GNN inputs for one scenario at a given noise variance (genie rows, or rows of the
// GMM components selected by feedback).
using InputProvider =
    std::function<std::vector<CVec>(std::size_t scenario, double noise_var, Rng& rng)>;

struct TrainingSet {
  std::vector<std::vector<CVec>> channels;
  InputProvider inputs;

  std::size_t size() const { return channels.size(); }
};

struct TrainResult {
  GnnModel model;  // best validation epoch
  std::vector<TrainLogRow> log;
  int best_epoch = 0;
  double best_val_rate = 0.0;
  double initial_val_rate = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<TrainLogRow> log)
      : std::runtime_error(what), log_(std::move(log)) {}
  const std::vector<TrainLogRow>& log() const { return log_; }

 private:
  std::vector<TrainLogRow> log_;
};

// Adam on the mean negative sum-rate; each presentation draws its SNR uniformly in dB.
TrainResult train(GnnModel model, const TrainingSet& training, const TrainingSet& validation,
                  const TrainConfig& config);

// Mean sum-rate of the model on a validation set with fixed per-scenario noise.
double validation_rate(const GnnModel& model, const std::vector<TrainingSample>& samples,
                       double rho);

// Deterministic validation samples: noise drawn once per scenario from the SNR range.
std::vector<TrainingSample> make_validation_samples(const TrainingSet& validation,
                                                    const TrainConfig& config);

}  // namespace statprec
