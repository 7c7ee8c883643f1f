#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "statprec/gnn_precoder.hpp"
#include "statprec/sum_rate.hpp"

namespace statprec {

namespace {

constexpr std::uint64_t kValidationStream = 0x7661;  // "va"
constexpr std::uint64_t kShuffleStream = 0x7368;     // "sh"
constexpr std::uint64_t kPresentationStream = 0x7072;

double draw_noise_var(const TrainConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> snr(config.snr_min_db, config.snr_max_db);
  return db_to_noise_var(snr(rng));
}

class Adam {
 public:
  Adam(std::size_t size, const TrainConfig& config)
      : m_(size, 0.0), v_(size, 0.0), config_(config) {}

  void step(std::span<double> params, const std::vector<double>& grad) {
    ++t_;
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double correction1 = 1.0 - std::pow(b1, t_);
    const double correction2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      const double m_hat = m_[i] / correction1;
      const double v_hat = v_[i] / correction2;
      params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.adam_eps);
    }
  }

 private:
  std::vector<double> m_, v_;
  const TrainConfig& config_;
  int t_ = 0;
};

}  // namespace

std::vector<TrainingSample> make_validation_samples(const TrainingSet& validation,
                                                    const TrainConfig& config) {
  std::vector<TrainingSample> out(validation.size());
  for (std::size_t d = 0; d < validation.size(); ++d) {
    Rng rng(derive_seed(config.seed, kValidationStream, d));
    out[d].noise_var = draw_noise_var(config, rng);
    out[d].inputs = validation.inputs(d, out[d].noise_var, rng);
    out[d].channels = validation.channels[d];
  }
  return out;
}

double validation_rate(const GnnModel& model, const std::vector<TrainingSample>& samples,
                       double rho) {
  if (samples.empty()) throw std::invalid_argument("validation_rate: empty validation set");
  std::vector<double> rates(samples.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t d = 0; d < static_cast<std::int64_t>(samples.size()); ++d) {
    try {
      const auto& s = samples[static_cast<std::size_t>(d)];
      rates[static_cast<std::size_t>(d)] =
          sum_rate(s.channels, forward(model, s.inputs, rho), s.noise_var);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
}

TrainResult train(GnnModel model, const TrainingSet& training, const TrainingSet& validation,
                  const TrainConfig& config) {
  if (training.size() == 0) throw std::invalid_argument("train: empty training set");
  if (!training.inputs || !validation.inputs)
    throw std::invalid_argument("train: missing input provider");
  if (config.epochs < 1 || config.batch_size < 1)
    throw std::invalid_argument("train: epochs and batch size must be >= 1");
  if (config.snr_max_db < config.snr_min_db)
    throw std::invalid_argument("train: empty SNR range");
  const std::size_t users = training.channels.front().size();
  for (const auto& s : training.channels)
    if (s.size() != users) throw std::invalid_argument("train: scenarios must share J");

  const std::vector<TrainingSample> val = make_validation_samples(validation, config);

  TrainResult result;
  result.initial_val_rate = validation_rate(model, val, config.rho);
  result.best_val_rate = result.initial_val_rate;
  result.best_epoch = 0;
  result.model = model;

  Adam adam(model.parameters().size(), config);
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double rate_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<TrainingSample> batch(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t d = order[b];
        Rng rng(derive_seed(config.seed, kPresentationStream,
                            static_cast<std::uint64_t>(epoch) * training.size() + d));
        auto& s = batch[b - start];
        s.noise_var = draw_noise_var(config, rng);
        s.inputs = training.inputs(d, s.noise_var, rng);
        s.channels = training.channels[d];
      }
      double loss = 0.0;
      try {
        loss = loss_and_gradient(model, batch, config.rho, grad);
      } catch (const NonFiniteError& e) {
        throw TrainingDiverged("train: epoch " + std::to_string(epoch) + ": " + e.what(),
                               result.log);
      }
      rate_sum -= loss * static_cast<double>(batch.size());
      adam.step(model.parameters(), grad);
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.train_rate = rate_sum / static_cast<double>(order.size());
    try {
      row.val_rate = validation_rate(model, val, config.rho);
    } catch (const NonFiniteError& e) {
      row.val_rate = std::numeric_limits<double>::quiet_NaN();
      result.log.push_back(row);
      throw TrainingDiverged("train: epoch " + std::to_string(epoch) + ": " + e.what(),
                             result.log);
    }
    row.learning_rate = config.learning_rate;
    result.log.push_back(row);
    if (config.on_epoch) config.on_epoch(row);
    if (!std::isfinite(row.val_rate))
      throw TrainingDiverged("train: validation sum-rate is not finite at epoch " +
                                 std::to_string(epoch),
                             result.log);
    if (row.val_rate > result.best_val_rate) {
      result.best_val_rate = row.val_rate;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

}  // namespace statprec
