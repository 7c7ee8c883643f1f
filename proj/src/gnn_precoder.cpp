#include "statprec/gnn_precoder.hpp"

#include <cmath>
#include <string>

#include <omp.h>

#include "statprec/sum_rate.hpp"

namespace statprec {

namespace {

constexpr Index kGradientChunk = 4;

struct LayerTape {
  RMat input;
  RMat pre;
  RMat tf, qf, kf, uf;
  RMat attention;  // M x (J * J); column j * J + k holds a_jk
};

struct Tape {
  RMat x;  // 2N x J
  RMat z;  // 2N x J
  std::vector<LayerTape> layers;
  CMat raw;  // V'
  double norm = 0.0;
};

RMat stack_inputs(const std::vector<CVec>& rows, int antennas) {
  if (rows.empty()) throw std::invalid_argument("gnn: at least one user is required");
  RMat x(2 * antennas, static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != antennas)
      throw std::invalid_argument("gnn: input " + std::to_string(j) + " has length " +
                                  std::to_string(rows[j].size()) + ", expected " +
                                  std::to_string(antennas));
    x.col(static_cast<Index>(j)) << rows[j].real(), rows[j].imag();
  }
  return x;
}

void require_finite(const RMat& m, int layer, const char* stage) {
  if (!m.allFinite())
    throw NonFiniteError(std::string("gnn: non-finite ") + stage + " at layer " +
                             std::to_string(layer),
                         layer);
}

double prelu(double z, double slope) { return z > 0.0 ? z : slope * z; }

// z -> edge features: f(r, j * N + n) = prelu(z(2n + r, j)).
RMat extractor_output(const RMat& z, double slope, int antennas) {
  const Index users = z.cols();
  RMat f(2, antennas * users);
  for (Index j = 0; j < users; ++j)
    for (int n = 0; n < antennas; ++n)
      for (int r = 0; r < 2; ++r) f(r, j * antennas + n) = prelu(z(2 * n + r, j), slope);
  return f;
}

RMat layer_apply(const RMat& f, const LayerView& p, double alpha, double beta, int n, bool relu,
                 LayerTape* tape) {
  if (f.rows() != p.s.cols() || f.cols() % n != 0)
    throw std::invalid_argument("layer_forward: feature dimensions do not match the layer");
  const Index users = f.cols() / n;
  RMat pre = p.s * f;
  const RMat tf = p.t * f;
  const RMat qf = p.q * f;
  const RMat kf = p.k * f;
  const RMat uf = p.u * f;
  const Index m = pre.rows();

  RMat attention(m, users * users);
  for (Index j = 0; j < users; ++j)
    for (Index k = 0; k < users; ++k)
      attention.col(j * users + k) =
          qf.middleCols(j * n, n).cwiseProduct(kf.middleCols(k * n, n)).rowwise().sum() /
          static_cast<double>(n);

#pragma omp parallel for schedule(static) if (users > 1 && !omp_in_parallel())
  for (Index j = 0; j < users; ++j) {
    auto block = pre.middleCols(j * n, n);
    const RVec total = tf.middleCols(j * n, n).rowwise().sum();
    block += alpha * (total.replicate(1, n) - tf.middleCols(j * n, n));
    for (Index k = 0; k < users; ++k) {
      if (k == j) continue;
      block.array() +=
          beta * (uf.middleCols(k * n, n).array().colwise() * attention.col(j * users + k).array());
    }
  }

  RMat out = relu ? RMat(pre.cwiseMax(0.0)) : pre;
  if (tape) {
    tape->input = f;
    tape->pre = std::move(pre);
    tape->tf = tf;
    tape->qf = qf;
    tape->kf = kf;
    tape->uf = uf;
    tape->attention = std::move(attention);
  }
  return out;
}

RMat layer_backward(const LayerTape& tp, const RMat& dout, const LayerView& p, double alpha,
                    double beta, int n, bool relu, LayerMut& grad) {
  const RMat dpre =
      relu ? RMat(dout.cwiseProduct((tp.pre.array() > 0.0).cast<double>().matrix())) : dout;
  const Index m = dpre.rows();
  const Index cols = dpre.cols();
  const Index users = cols / n;

  RMat dtf(m, cols);
  RMat dqf = RMat::Zero(m, cols);
  RMat dkf = RMat::Zero(m, cols);
  RMat duf = RMat::Zero(m, cols);
  RMat dattention = RMat::Zero(m, users * users);
  for (Index j = 0; j < users; ++j) {
    const auto dblock = dpre.middleCols(j * n, n);
    const RVec dtotal = dblock.rowwise().sum();
    dtf.middleCols(j * n, n) = alpha * (dtotal.replicate(1, n) - dblock);
    for (Index k = 0; k < users; ++k) {
      if (k == j) continue;
      dattention.col(j * users + k) =
          beta * dblock.cwiseProduct(tp.uf.middleCols(k * n, n)).rowwise().sum();
      duf.middleCols(k * n, n).array() +=
          beta * (dblock.array().colwise() * tp.attention.col(j * users + k).array());
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index j = 0; j < users; ++j)
    for (Index k = 0; k < users; ++k) {
      if (k == j) continue;
      const auto da = dattention.col(j * users + k).array();
      dqf.middleCols(j * n, n).array() += inv_n * (tp.kf.middleCols(k * n, n).array().colwise() * da);
      dkf.middleCols(k * n, n).array() += inv_n * (tp.qf.middleCols(j * n, n).array().colwise() * da);
    }

  const RMat input_t = tp.input.transpose();
  grad.s += dpre * input_t;
  grad.t += dtf * input_t;
  grad.q += dqf * input_t;
  grad.k += dkf * input_t;
  grad.u += duf * input_t;
  return p.s.transpose() * dpre + p.t.transpose() * dtf + p.q.transpose() * dqf +
         p.k.transpose() * dkf + p.u.transpose() * duf;
}

CMat run_forward(const GnnModel& model, const std::vector<CVec>& rows, double rho, Tape* tape) {
  const GnnShape& shape = model.shape();
  const int n = shape.antennas;
  if (!(rho > 0.0)) throw std::invalid_argument("forward: rho must be positive");
  RMat x = stack_inputs(rows, n);
  RMat z = model.extractor_weight() * x;
  z.colwise() += model.extractor_bias();
  require_finite(z, 0, "extractor output");
  RMat f = extractor_output(z, model.prelu_slope(), n);
  if (tape) {
    tape->x = std::move(x);
    tape->z = z;
    tape->layers.resize(static_cast<std::size_t>(shape.layers()));
  }
  for (int l = 0; l < shape.layers(); ++l) {
    const bool hidden = l + 1 < shape.layers();
    f = layer_apply(f, model.layer(l), shape.alpha, shape.beta, n, hidden,
                    tape ? &tape->layers[static_cast<std::size_t>(l)] : nullptr);
    require_finite(f, l + 1, "features");
  }
  const Index users = static_cast<Index>(rows.size());
  CMat raw(n, users);
  for (Index j = 0; j < users; ++j)
    for (int i = 0; i < n; ++i) raw(i, j) = cplx(f(0, j * n + i), f(1, j * n + i));
  const double norm = raw.norm();
  if (!(norm > 0.0))
    throw std::runtime_error("forward: network output is identically zero, cannot normalise");
  if (tape) {
    tape->raw = raw;
    tape->norm = norm;
  }
  return (std::sqrt(rho) / norm) * raw;
}

std::size_t extractor_size(int n) { return static_cast<std::size_t>(4 * n * n + 2 * n + 1); }

}  // namespace

GnnShape GnnShape::make(int antennas, int hidden_layers, int width, double beta) {
  GnnShape s;
  s.antennas = antennas;
  s.dims.push_back(2);
  for (int l = 0; l < hidden_layers; ++l) s.dims.push_back(width);
  s.dims.push_back(2);
  s.alpha = 0.1 / antennas;
  s.beta = beta;
  s.validate();
  return s;
}

void GnnShape::validate() const {
  if (antennas < 1) throw std::invalid_argument("GnnShape: antennas must be >= 1");
  if (dims.size() < 2) throw std::invalid_argument("GnnShape: at least one layer is required");
  if (dims.front() != 2 || dims.back() != 2)
    throw std::invalid_argument("GnnShape: input and output widths must be 2");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("GnnShape: layer widths must be positive");
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0)
    throw std::invalid_argument("GnnShape: alpha and beta must be finite and nonnegative");
}

std::size_t GnnShape::parameter_count() const {
  std::size_t total = extractor_size(antennas);
  for (int l = 1; l < static_cast<int>(dims.size()); ++l)
    total += 5 * static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l - 1]);
  return total;
}

GnnModel::GnnModel(GnnShape shape) : shape_(std::move(shape)) {
  shape_.validate();
  params_.assign(shape_.parameter_count(), 0.0);
}

std::size_t GnnModel::slope_offset() const {
  const auto n = static_cast<std::size_t>(shape_.antennas);
  return 4 * n * n + 2 * n;
}

std::size_t GnnModel::layer_offset(int l) const {
  std::size_t off = extractor_size(shape_.antennas);
  for (int i = 0; i < l; ++i)
    off += 5 * static_cast<std::size_t>(shape_.dims[i + 1]) * static_cast<std::size_t>(shape_.dims[i]);
  return off;
}

Eigen::Map<const RMat> GnnModel::extractor_weight() const {
  const int d = 2 * shape_.antennas;
  return Eigen::Map<const RMat>(params_.data(), d, d);
}

Eigen::Map<const RVec> GnnModel::extractor_bias() const {
  const int d = 2 * shape_.antennas;
  return Eigen::Map<const RVec>(params_.data() + static_cast<std::size_t>(d) * d, d);
}

Eigen::Map<RMat> GnnModel::extractor_weight() {
  const int d = 2 * shape_.antennas;
  return Eigen::Map<RMat>(params_.data(), d, d);
}

Eigen::Map<RVec> GnnModel::extractor_bias() {
  const int d = 2 * shape_.antennas;
  return Eigen::Map<RVec>(params_.data() + static_cast<std::size_t>(d) * d, d);
}

LayerView GnnModel::layer(int l) const {
  const Index rows = shape_.dims[static_cast<std::size_t>(l) + 1];
  const Index cols = shape_.dims[static_cast<std::size_t>(l)];
  const double* base = params_.data() + layer_offset(l);
  const auto block = static_cast<std::size_t>(rows * cols);
  return LayerView{Eigen::Map<const RMat>(base, rows, cols),
                   Eigen::Map<const RMat>(base + block, rows, cols),
                   Eigen::Map<const RMat>(base + 2 * block, rows, cols),
                   Eigen::Map<const RMat>(base + 3 * block, rows, cols),
                   Eigen::Map<const RMat>(base + 4 * block, rows, cols)};
}

LayerMut GnnModel::layer(int l) {
  const Index rows = shape_.dims[static_cast<std::size_t>(l) + 1];
  const Index cols = shape_.dims[static_cast<std::size_t>(l)];
  double* base = params_.data() + layer_offset(l);
  const auto block = static_cast<std::size_t>(rows * cols);
  return LayerMut{Eigen::Map<RMat>(base, rows, cols), Eigen::Map<RMat>(base + block, rows, cols),
                  Eigen::Map<RMat>(base + 2 * block, rows, cols),
                  Eigen::Map<RMat>(base + 3 * block, rows, cols),
                  Eigen::Map<RMat>(base + 4 * block, rows, cols)};
}

GnnModel glorot_init(const GnnShape& shape, Rng& rng) {
  GnnModel model(shape);
  auto fill = [&rng](auto&& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
  };
  fill(model.extractor_weight());
  model.extractor_bias().setZero();
  model.prelu_slope() = 0.25;
  for (int l = 0; l < shape.layers(); ++l) {
    LayerMut p = model.layer(l);
    fill(p.s);
    fill(p.t);
    fill(p.q);
    fill(p.k);
    fill(p.u);
  }
  return model;
}

RMat extract_features(const GnnModel& model, const std::vector<CVec>& rows) {
  const int n = model.shape().antennas;
  RMat z = model.extractor_weight() * stack_inputs(rows, n);
  z.colwise() += model.extractor_bias();
  return extractor_output(z, model.prelu_slope(), n);
}

RMat layer_forward(const RMat& features, const LayerView& layer, double alpha, double beta,
                   int antennas, bool relu) {
  return layer_apply(features, layer, alpha, beta, antennas, relu, nullptr);
}

CMat forward_from_features(const GnnModel& model, RMat features, double rho) {
  const GnnShape& shape = model.shape();
  const int n = shape.antennas;
  if (!(rho > 0.0)) throw std::invalid_argument("forward: rho must be positive");
  if (features.rows() != 2 || features.cols() % n != 0 || features.cols() == 0)
    throw std::invalid_argument("forward: features must be 2 x (N * J)");
  require_finite(features, 0, "extractor output");
  for (int l = 0; l < shape.layers(); ++l) {
    features = layer_apply(features, model.layer(l), shape.alpha, shape.beta, n,
                           l + 1 < shape.layers(), nullptr);
    require_finite(features, l + 1, "features");
  }
  const Index users = features.cols() / n;
  CMat raw(n, users);
  for (Index j = 0; j < users; ++j)
    for (int i = 0; i < n; ++i) raw(i, j) = cplx(features(0, j * n + i), features(1, j * n + i));
  const double norm = raw.norm();
  if (!(norm > 0.0))
    throw std::runtime_error("forward: network output is identically zero, cannot normalise");
  return (std::sqrt(rho) / norm) * raw;
}

CMat forward(const GnnModel& model, const std::vector<CVec>& rows, double rho) {
  return forward_from_features(model, extract_features(model, rows), rho);
}

double sample_loss_and_gradient(const GnnModel& model, const TrainingSample& sample, double rho,
                                std::span<double> grad) {
  if (grad.size() != model.parameters().size())
    throw std::invalid_argument("gradient: buffer size does not match the model");
  if (sample.channels.size() != sample.inputs.size())
    throw std::invalid_argument("gradient: inputs and channels disagree on the user count");
  const GnnShape& shape = model.shape();
  const int n = shape.antennas;
  Tape tape;
  const CMat v = run_forward(model, sample.inputs, rho, &tape);
  const double rate = sum_rate(sample.channels, v, sample.noise_var);
  if (!std::isfinite(rate)) throw NonFiniteError("gradient: non-finite sum-rate", shape.layers());

  // loss = -rate; back through v = c * x / ||x||.
  const CMat dv = -sum_rate_gradient(sample.channels, v, sample.noise_var);
  const double c = std::sqrt(rho);
  const double inner = (tape.raw.conjugate().cwiseProduct(dv)).sum().real();
  const CMat dx = (c / tape.norm) * (dv - tape.raw * (inner / (tape.norm * tape.norm)));
  const Index users = dx.cols();
  RMat df(2, n * users);
  for (Index j = 0; j < users; ++j)
    for (int i = 0; i < n; ++i) {
      df(0, j * n + i) = dx(i, j).real();
      df(1, j * n + i) = dx(i, j).imag();
    }

  for (int l = shape.layers() - 1; l >= 0; --l) {
    const int rows = shape.dims[static_cast<std::size_t>(l) + 1];
    const int cols = shape.dims[static_cast<std::size_t>(l)];
    double* base = grad.data() + model.layer_offset(l);
    const auto block = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    LayerMut g{Eigen::Map<RMat>(base, rows, cols), Eigen::Map<RMat>(base + block, rows, cols),
               Eigen::Map<RMat>(base + 2 * block, rows, cols),
               Eigen::Map<RMat>(base + 3 * block, rows, cols),
               Eigen::Map<RMat>(base + 4 * block, rows, cols)};
    const bool hidden = l + 1 < shape.layers();
    df = layer_backward(tape.layers[static_cast<std::size_t>(l)], df, model.layer(l), shape.alpha,
                        shape.beta, n, hidden, g);
    require_finite(df, l + 1, "gradient");
  }

  // Extractor: f(r, jN + i) = prelu(z(2i + r, j)).
  const double slope = model.prelu_slope();
  RMat dz(2 * n, users);
  double dslope = 0.0;
  for (Index j = 0; j < users; ++j)
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < 2; ++r) {
        const double zv = tape.z(2 * i + r, j);
        const double upstream = df(r, j * n + i);
        if (zv > 0.0) {
          dz(2 * i + r, j) = upstream;
        } else {
          dz(2 * i + r, j) = slope * upstream;
          dslope += zv * upstream;
        }
      }
  const int d = 2 * n;
  Eigen::Map<RMat> dw(grad.data(), d, d);
  Eigen::Map<RVec> db(grad.data() + static_cast<std::size_t>(d) * d, d);
  dw += dz * tape.x.transpose();
  db += dz.rowwise().sum();
  grad[static_cast<std::size_t>(d) * d + d] += dslope;
  return -rate;
}

double loss_and_gradient(const GnnModel& model, std::span<const TrainingSample> batch, double rho,
                         std::vector<double>& grad) {
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  const std::size_t p = model.parameters().size();
  const auto count = static_cast<Index>(batch.size());
  const Index chunks = (count + kGradientChunk - 1) / kGradientChunk;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(chunks));
  std::vector<double> losses(static_cast<std::size_t>(chunks), 0.0);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (Index c = 0; c < chunks; ++c) {
    try {
      auto& acc = partial[static_cast<std::size_t>(c)];
      acc.assign(p, 0.0);
      double loss = 0.0;
      for (Index i = c * kGradientChunk; i < std::min(count, (c + 1) * kGradientChunk); ++i)
        loss += sample_loss_and_gradient(model, batch[static_cast<std::size_t>(i)], rho, acc);
      losses[static_cast<std::size_t>(c)] = loss;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  grad.assign(p, 0.0);
  double loss = 0.0;
  for (Index c = 0; c < chunks; ++c) {
    const auto& acc = partial[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < p; ++i) grad[i] += acc[i];
    loss += losses[static_cast<std::size_t>(c)];
  }
  const double scale = 1.0 / static_cast<double>(count);
  for (double& g : grad) g *= scale;
  return loss * scale;
}

namespace reference {

RMat layer_forward(const RMat& features, const LayerView& layer, double alpha, double beta,
                   int antennas, bool relu) {
  const Index in_dim = layer.s.cols();
  const Index out_dim = layer.s.rows();
  const Index n = antennas;
  const Index users = features.cols() / n;
  auto f = [&](Index ant, Index user, Index dim) { return features(dim, user * n + ant); };
  auto apply = [&](const Eigen::Map<const RMat>& w, Index ant, Index user, Index row) {
    double acc = 0.0;
    for (Index c = 0; c < in_dim; ++c) acc += w(row, c) * f(ant, user, c);
    return acc;
  };
  RMat out(out_dim, features.cols());
  for (Index j = 0; j < users; ++j)
    for (Index a = 0; a < n; ++a)
      for (Index m = 0; m < out_dim; ++m) {
        double value = apply(layer.s, a, j, m);
        double antenna_sum = 0.0;
        for (Index i = 0; i < n; ++i)
          if (i != a) antenna_sum += apply(layer.t, i, j, m);
        value += alpha * antenna_sum;
        double user_sum = 0.0;
        for (Index k = 0; k < users; ++k) {
          if (k == j) continue;
          double attention = 0.0;
          for (Index i = 0; i < n; ++i) attention += apply(layer.q, i, j, m) * apply(layer.k, i, k, m);
          attention /= static_cast<double>(n);
          user_sum += attention * apply(layer.u, a, k, m);
        }
        value += beta * user_sum;
        out(m, j * n + a) = relu ? std::max(value, 0.0) : value;
      }
  return out;
}

double loss_and_gradient(const GnnModel& model, std::span<const TrainingSample> batch, double rho,
                         std::vector<double>& grad) {
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  grad.assign(model.parameters().size(), 0.0);
  double loss = 0.0;
  for (const auto& sample : batch) loss += sample_loss_and_gradient(model, sample, rho, grad);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= scale;
  return loss * scale;
}

}  // namespace reference

}  // namespace statprec
