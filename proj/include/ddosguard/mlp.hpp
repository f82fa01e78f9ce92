#pragma once

// Multilayer perceptron for multiclass classification: ReLU hidden layers,
// softmax output, cross-entropy loss, plain mini-batch SGD.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ddosguard/common.hpp"

namespace ddosguard {

enum class Activation { Relu, Softmax };

inline const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "softmax"; }

struct LayerParams {
  Matrix weights;  // out x in
  std::vector<double> biases;
  Activation activation = Activation::Relu;

  std::size_t in() const noexcept { return weights.cols(); }
  std::size_t out() const noexcept { return weights.rows(); }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct MlpConfig {
  std::vector<std::size_t> hidden{100};
  double learning_rate = 0.001;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;
  bool shuffle = true;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("mlp: learning rate must be > 0");
    if (epochs < 1) throw InvalidArgument("mlp: epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("mlp: batch size must be >= 1");
    for (auto h : hidden) {
      if (h < 1) throw InvalidArgument("mlp: hidden layer width must be >= 1");
    }
  }
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct TrainLog {
  std::vector<double> loss;      // mean cross-entropy per epoch
  std::vector<double> accuracy;  // training accuracy per epoch
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(std::vector<LayerParams> layers, TrainLog log = {}) : layers_(std::move(layers)), log_(std::move(log)) {
    if (layers_.empty()) throw InvalidArgument("mlp: no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.biases.size() != L.out() || L.out() == 0 || L.in() == 0) throw InvalidArgument("mlp: bad layer shape");
      if (l > 0 && L.in() != layers_[l - 1].out()) throw InvalidArgument("mlp: layer dimensions do not chain");
      const bool last = l + 1 == layers_.size();
      if ((L.activation == Activation::Softmax) != last) {
        throw InvalidArgument("mlp: softmax must be the final activation and only there");
      }
    }
  }

  const std::vector<LayerParams>& layers() const noexcept { return layers_; }
  std::vector<LayerParams>& mutable_layers() noexcept { return layers_; }
  std::size_t input_dim() const noexcept { return layers_.front().in(); }
  std::size_t class_count() const noexcept { return layers_.back().out(); }
  const TrainLog& train_log() const noexcept { return log_; }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

 private:
  std::vector<LayerParams> layers_;
  TrainLog log_;
};

/// Per-layer values kept by forward() for backward(): inputs[l] feeds layer l,
/// pre[l] is its weighted sum v, inputs.back() holds the softmax output.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre;

  std::span<const double> probabilities() const noexcept { return inputs.back(); }
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const MlpModel& m) {
    Gradients g;
    for (const auto& L : m.layers()) {
      g.weights.emplace_back(L.out(), L.in());
      g.biases.emplace_back(L.out(), 0.0);
    }
    return g;
  }
};

/// Numerically stable softmax: shifts by the max logit first.
inline void softmax_inplace(std::span<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - top);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

inline void forward_into(const MlpModel& model, std::span<const double> x, ForwardCache& cache) {
  if (x.size() != model.input_dim()) throw InvalidArgument("mlp: input dimension mismatch");
  const auto& layers = model.layers();
  cache.inputs.resize(layers.size() + 1);
  cache.pre.resize(layers.size());
  cache.inputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const auto& a = cache.inputs[l];
    auto& v = cache.pre[l];
    v.resize(L.out());
    for (std::size_t j = 0; j < L.out(); ++j) {
      const auto w = L.weights.row(j);
      double acc = 0.0;
      for (std::size_t i = 0; i < L.in(); ++i) acc += w[i] * a[i];
      v[j] = acc + L.biases[j];
    }
    auto& y = cache.inputs[l + 1];
    y = v;
    if (L.activation == Activation::Relu) {
      for (auto& val : y) val = std::max(0.0, val);
    } else {
      softmax_inplace(y);
    }
  }
}

inline ForwardCache forward(const MlpModel& model, std::span<const double> x) {
  ForwardCache cache;
  forward_into(model, x, cache);
  return cache;
}

/// e_j = d_j - y_j with d the one-hot target.
inline std::vector<double> output_error(std::span<const double> probabilities, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= probabilities.size()) {
    throw InvalidArgument("mlp: target class out of range");
  }
  std::vector<double> e(probabilities.size());
  for (std::size_t j = 0; j < e.size(); ++j) {
    e[j] = (static_cast<std::size_t>(target) == j ? 1.0 : 0.0) - probabilities[j];
  }
  return e;
}

/// Adds scale * dLoss/dParams for one sample to `grads`. With softmax +
/// cross-entropy the output-layer local gradient dLoss/dv equals -error.
inline void accumulate_backward(const MlpModel& model, const ForwardCache& cache, std::span<const double> error,
                                double scale, Gradients& grads, std::vector<double>& delta,
                                std::vector<double>& next_delta) {
  const auto& layers = model.layers();
  if (cache.pre.size() != layers.size() || cache.inputs.size() != layers.size() + 1) {
    throw InvalidArgument("mlp: forward cache does not match model");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (cache.pre[l].size() != layers[l].out() || cache.inputs[l].size() != layers[l].in()) {
      throw InvalidArgument("mlp: forward cache does not match model");
    }
  }
  if (error.size() != model.class_count()) throw InvalidArgument("mlp: error vector length mismatch");

  delta.assign(error.begin(), error.end());
  for (auto& d : delta) d = -d;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& L = layers[l];
    const auto& a = cache.inputs[l];
    auto& gw = grads.weights[l];
    auto& gb = grads.biases[l];
    for (std::size_t j = 0; j < L.out(); ++j) {
      const double dj = scale * delta[j];
      if (dj == 0.0) continue;
      auto row = gw.row(j);
      for (std::size_t i = 0; i < L.in(); ++i) row[i] += dj * a[i];
      gb[j] += dj;
    }
    if (l == 0) break;
    const auto& below = cache.pre[l - 1];
    next_delta.assign(L.in(), 0.0);
    for (std::size_t j = 0; j < L.out(); ++j) {
      const double dj = delta[j];
      if (dj == 0.0) continue;
      const auto w = L.weights.row(j);
      for (std::size_t i = 0; i < L.in(); ++i) next_delta[i] += w[i] * dj;
    }
    // ReLU'(v) = 1 for v > 0, else 0 (including v == 0).
    for (std::size_t i = 0; i < next_delta.size(); ++i) {
      if (!(below[i] > 0.0)) next_delta[i] = 0.0;
    }
    std::swap(delta, next_delta);
  }
}

/// Gradient of the cross-entropy of one sample w.r.t. every weight and bias.
inline Gradients backward(const MlpModel& model, const ForwardCache& cache, std::span<const double> error) {
  auto grads = Gradients::zeros_like(model);
  std::vector<double> delta, next_delta;
  accumulate_backward(model, cache, error, 1.0, grads, delta, next_delta);
  return grads;
}

/// w <- w - lr * grad for every parameter.
inline void sgd_step(MlpModel& model, const Gradients& grads, double learning_rate) {
  auto& layers = model.mutable_layers();
  if (grads.weights.size() != layers.size() || grads.biases.size() != layers.size()) {
    throw InvalidArgument("sgd: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& W = layers[l].weights.data();
    const auto& G = grads.weights[l].data();
    auto& b = layers[l].biases;
    const auto& gb = grads.biases[l];
    if (G.size() != W.size() || gb.size() != b.size()) throw InvalidArgument("sgd: gradient shape mismatch");
    for (std::size_t i = 0; i < W.size(); ++i) W[i] -= learning_rate * G[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= learning_rate * gb[i];
  }
}

inline double cross_entropy(std::span<const double> probabilities, int target) {
  const double p = probabilities[static_cast<std::size_t>(target)];
  return -std::log(std::max(p, std::numeric_limits<double>::min()));
}

/// Mean cross-entropy gradient over `rows`, plus the summed loss and number
/// of correct argmax predictions seen during the forward passes.
struct BatchResult {
  Gradients grads;
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

inline BatchResult batch_gradient(const MlpModel& model, const Matrix& X, std::span<const int> y,
                                  std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidArgument("mlp: empty batch");
  BatchResult out{Gradients::zeros_like(model)};
  ForwardCache cache;
  std::vector<double> delta, next_delta;
  const double scale = 1.0 / static_cast<double>(rows.size());
  for (auto r : rows) {
    forward_into(model, X.row(r), cache);
    const auto probs = cache.probabilities();
    out.loss_sum += cross_entropy(probs, y[r]);
    if (static_cast<int>(argmax(probs)) == y[r]) ++out.correct;
    const auto e = output_error(probs, y[r]);
    accumulate_backward(model, cache, e, scale, out.grads, delta, next_delta);
  }
  return out;
}

/// Weights uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)], zero biases.
inline MlpModel init_mlp(std::size_t input_dim, std::size_t class_count, const std::vector<std::size_t>& hidden,
                         std::uint64_t seed) {
  if (input_dim < 1 || class_count < 2) throw InvalidArgument("mlp: need input_dim >= 1 and >= 2 classes");
  Rng rng(seed);
  std::vector<LayerParams> layers;
  std::size_t fan_in = input_dim;
  auto add = [&](std::size_t width, Activation act) {
    LayerParams L{Matrix(width, fan_in), std::vector<double>(width, 0.0), act};
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (auto& w : L.weights.data()) w = rng.uniform(-bound, bound);
    layers.push_back(std::move(L));
    fan_in = width;
  };
  for (auto h : hidden) add(h, Activation::Relu);
  add(class_count, Activation::Softmax);
  return MlpModel(std::move(layers));
}

struct DivergenceError : Error {
  using Error::Error;
};

inline MlpModel fit_mlp(const Matrix& X, std::span<const int> y, std::size_t class_count, const MlpConfig& cfg) {
  cfg.validate();
  const std::size_t n = X.rows();
  if (y.size() != n) throw InvalidArgument("mlp: label count does not match rows");
  if (n < cfg.batch_size) throw InvalidArgument("mlp: fewer rows than the batch size");
  std::vector<bool> present(class_count, false);
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_count) throw InvalidArgument("mlp: label out of range");
    present[static_cast<std::size_t>(label)] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) throw InvalidArgument("mlp: need >= 2 classes");

  MlpModel model = init_mlp(X.cols(), class_count, cfg.hidden, cfg.seed);
  Rng shuffler(derive_seed(cfg.seed, 0));
  TrainLog log;
  auto order = iota_indices(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffler.shuffle(std::span<std::size_t>(order));
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      auto batch = batch_gradient(model, X, y, std::span<const std::size_t>(order).subspan(start, len));
      loss += batch.loss_sum;
      correct += batch.correct;
      sgd_step(model, batch.grads, cfg.learning_rate);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) {
      throw DivergenceError("mlp: non-finite training loss at epoch " + std::to_string(epoch + 1) +
                            " (learning rate " + std::to_string(cfg.learning_rate) + ")");
    }
    log.loss.push_back(loss);
    log.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
  }
  return MlpModel(std::move(model.mutable_layers()), std::move(log));
}

inline Matrix predict_proba_mlp(const MlpModel& model, const Matrix& X) {
  if (X.cols() != model.input_dim()) throw InvalidArgument("mlp: input dimension mismatch");
  Matrix out(X.rows(), model.class_count());
  ForwardCache cache;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    forward_into(model, X.row(i), cache);
    std::copy(cache.inputs.back().begin(), cache.inputs.back().end(), out.row(i).begin());
  }
  return out;
}

/// Row-wise argmax; ties go to the smallest class id.
inline std::vector<int> argmax_rows(const Matrix& probabilities) {
  std::vector<int> out(probabilities.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(argmax(probabilities.row(i)));
  return out;
}

inline std::vector<int> predict_mlp(const MlpModel& model, const Matrix& X) {
  return argmax_rows(predict_proba_mlp(model, X));
}

}  // namespace ddosguard
