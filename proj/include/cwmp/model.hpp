#pragma once

// Minimal multi-layer perceptron with softmax cross-entropy loss.
//
// Parameters live in one flat vector so that gradients, masks and cost
// vectors can all be indexed by the same coordinate j. Flattening order:
// layer-major; inside a layer the weight matrix comes first, stored
// row-major with shape (out x in) so that weight(o, i) sits at
// offset + o * in + i; the out biases follow.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cwmp/errors.hpp"
#include "cwmp/rng.hpp"

namespace cwmp {

enum class Activation { Relu, Identity };

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::Identity;

  std::size_t weight_count() const noexcept { return in * out; }
  std::size_t param_count() const noexcept { return in * out + out; }
  bool operator==(const LayerSpec&) const = default;
};

/// in -> hidden... (ReLU) -> classes (identity, fed to softmax).
inline std::vector<LayerSpec> mlp_layers(std::size_t inputs, const std::vector<std::size_t>& hidden,
                                         std::size_t classes) {
  std::vector<LayerSpec> layers;
  std::size_t prev = inputs;
  for (auto h : hidden) {
    layers.push_back({prev, h, Activation::Relu});
    prev = h;
  }
  layers.push_back({prev, classes, Activation::Identity});
  return layers;
}

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

struct Batch {
  Matrix inputs;            // batch x input-dim
  std::vector<int> labels;  // one class index per row

  std::size_t size() const noexcept { return labels.size(); }
};

/// Flat gradient aligned with a ModelParams flattening.
struct GradientVector {
  std::vector<double> values;

  GradientVector() = default;
  explicit GradientVector(std::size_t d) : values(d, 0.0) {}
  explicit GradientVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t j) const { return values[j]; }
  double& operator[](std::size_t j) { return values[j]; }
  bool operator==(const GradientVector&) const = default;
};

/// Per-layer view of the parameters, used by flatten/unflatten.
struct LayerTensors {
  Matrix weights;  // out x in
  std::vector<double> biases;
  bool operator==(const LayerTensors&) const = default;
};

class ModelParams {
 public:
  ModelParams() = default;

  explicit ModelParams(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    validate_layers();
    values_.assign(offsets_.back(), 0.0);
  }

  ModelParams(std::vector<LayerSpec> layers, std::vector<double> values)
      : layers_(std::move(layers)), values_(std::move(values)) {
    validate_layers();
    if (values_.size() != offsets_.back())
      throw ConfigError("parameter vector has " + std::to_string(values_.size()) + " entries, layers need " +
                        std::to_string(offsets_.back()));
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static ModelParams init_uniform(std::vector<LayerSpec> layers, Rng& rng) {
    ModelParams p(std::move(layers));
    for (std::size_t l = 0; l < p.layers_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.layers_[l].in));
      for (std::size_t j = p.offsets_[l]; j < p.offsets_[l + 1]; ++j) p.values_[j] = bound * (2.0 * rng.uniform() - 1.0);
    }
    return p;
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t num_inputs() const { return layers_.front().in; }
  std::size_t num_classes() const { return layers_.back().out; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  std::size_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }

  /// Layer that owns flat index j.
  std::size_t layer_of(std::size_t j) const {
    if (j >= values_.size()) throw ConfigError("flat index out of range");
    std::size_t l = 0;
    while (offsets_[l + 1] <= j) ++l;
    return l;
  }

  std::span<const double> weights(std::size_t l) const {
    return {values_.data() + offsets_[l], layers_[l].weight_count()};
  }
  std::span<const double> biases(std::size_t l) const {
    return {values_.data() + offsets_[l] + layers_[l].weight_count(), layers_[l].out};
  }

  std::vector<LayerTensors> unflatten() const {
    std::vector<LayerTensors> out;
    out.reserve(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      LayerTensors t{Matrix(layers_[l].out, layers_[l].in), {}};
      auto w = weights(l);
      t.weights.data.assign(w.begin(), w.end());
      auto b = biases(l);
      t.biases.assign(b.begin(), b.end());
      out.push_back(std::move(t));
    }
    return out;
  }

  static ModelParams flatten(std::vector<LayerSpec> layers, const std::vector<LayerTensors>& tensors) {
    ModelParams p(std::move(layers));
    if (tensors.size() != p.layers_.size()) throw ConfigError("tensor count does not match layer count");
    for (std::size_t l = 0; l < tensors.size(); ++l) {
      const auto& spec = p.layers_[l];
      const auto& t = tensors[l];
      if (t.weights.rows != spec.out || t.weights.cols != spec.in || t.biases.size() != spec.out)
        throw ConfigError("tensor shape does not match layer " + std::to_string(l));
      std::copy(t.weights.data.begin(), t.weights.data.end(), p.values_.begin() + p.offsets_[l]);
      std::copy(t.biases.begin(), t.biases.end(), p.values_.begin() + p.offsets_[l] + spec.weight_count());
    }
    return p;
  }

  bool operator==(const ModelParams& o) const { return layers_ == o.layers_ && values_ == o.values_; }

 private:
  void validate_layers() {
    if (layers_.empty()) throw ConfigError("model needs at least one layer");
    offsets_.assign(1, 0);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& s = layers_[l];
      if (s.in == 0 || s.out == 0) throw ConfigError("layer dimensions must be positive");
      if (l > 0 && layers_[l - 1].out != s.in) throw ConfigError("layer " + std::to_string(l) + " input mismatch");
      offsets_.push_back(offsets_.back() + s.param_count());
    }
    if (layers_.back().activation != Activation::Identity)
      throw ConfigError("output layer must be linear (softmax is part of the loss)");
  }

  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> values_;
};

struct ForwardResult {
  double loss = 0.0;
  Matrix logits;  // batch x classes
};

namespace detail {

inline void check_batch(const ModelParams& params, const Batch& batch) {
  if (params.num_layers() == 0) throw ConfigError("empty model");
  if (batch.size() == 0) throw InputError("empty batch");
  if (batch.inputs.rows != batch.size()) throw InputError("batch inputs and labels disagree in length");
  if (batch.inputs.cols != params.num_inputs())
    throw ConfigError("batch has " + std::to_string(batch.inputs.cols) + " features, model expects " +
                      std::to_string(params.num_inputs()));
  const auto classes = static_cast<int>(params.num_classes());
  for (int y : batch.labels)
    if (y < 0 || y >= classes) throw InputError("label " + std::to_string(y) + " out of range");
}

// z = a W^T + b for one layer; a is batch x in.
inline Matrix affine(const ModelParams& params, std::size_t l, const Matrix& a) {
  const auto& spec = params.layers()[l];
  auto w = params.weights(l);
  auto b = params.biases(l);
  Matrix z(a.rows, spec.out);
  for (std::size_t r = 0; r < a.rows; ++r) {
    auto in = a.row(r);
    auto zr = z.row(r);
    for (std::size_t o = 0; o < spec.out; ++o) {
      const double* wr = w.data() + o * spec.in;
      double acc = b[o];
      for (std::size_t i = 0; i < spec.in; ++i) acc += wr[i] * in[i];
      zr[o] = acc;
    }
  }
  return z;
}

inline void activate(Matrix& z, Activation act) {
  if (act == Activation::Relu)
    for (auto& v : z.data) v = v > 0.0 ? v : 0.0;
}

// Softmax probabilities in place; returns mean cross-entropy.
inline double softmax_cross_entropy(Matrix& logits_to_probs, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits_to_probs.rows; ++r) {
    auto row = logits_to_probs.row(r);
    double mx = row[0];
    for (double v : row) mx = v > mx ? v : mx;
    const double shifted = row[labels[r]] - mx;
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    total += std::log(sum) - shifted;
    for (double& v : row) v /= sum;
  }
  return total / static_cast<double>(logits_to_probs.rows);
}

}  // namespace detail

/// Mean cross-entropy of the batch and the raw logits.
inline ForwardResult forward(const ModelParams& params, const Batch& batch) {
  detail::check_batch(params, batch);
  Matrix a = batch.inputs;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    a = detail::affine(params, l, a);
    detail::activate(a, params.layers()[l].activation);
  }
  ForwardResult out;
  out.logits = a;
  out.loss = detail::softmax_cross_entropy(a, batch.labels);
  return out;
}

/// Gradient of the mean batch loss with respect to the flat parameters.
inline GradientVector backward(const ModelParams& params, const Batch& batch) {
  detail::check_batch(params, batch);
  const std::size_t L = params.num_layers();
  const std::size_t B = batch.size();

  // acts[0] is the input, acts[l + 1] the output of layer l.
  std::vector<Matrix> acts;
  acts.reserve(L + 1);
  acts.push_back(batch.inputs);
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = detail::affine(params, l, acts.back());
    detail::activate(z, params.layers()[l].activation);
    acts.push_back(std::move(z));
  }

  Matrix delta = acts.back();
  detail::softmax_cross_entropy(delta, batch.labels);
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t r = 0; r < B; ++r) {
    auto row = delta.row(r);
    row[batch.labels[r]] -= 1.0;
    for (double& v : row) v *= inv_b;
  }

  GradientVector grad(params.size());
  for (std::size_t l = L; l-- > 0;) {
    const auto& spec = params.layers()[l];
    const Matrix& a_prev = acts[l];
    double* gw = grad.values.data() + params.layer_offset(l);
    double* gb = gw + spec.weight_count();
    for (std::size_t r = 0; r < B; ++r) {
      auto d = delta.row(r);
      auto a = a_prev.row(r);
      for (std::size_t o = 0; o < spec.out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        double* gwr = gw + o * spec.in;
        for (std::size_t i = 0; i < spec.in; ++i) gwr[i] += dv * a[i];
        gb[o] += dv;
      }
    }
    if (l == 0) break;

    auto w = params.weights(l);
    Matrix prev(B, spec.in);
    for (std::size_t r = 0; r < B; ++r) {
      auto d = delta.row(r);
      auto p = prev.row(r);
      for (std::size_t o = 0; o < spec.out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        const double* wr = w.data() + o * spec.in;
        for (std::size_t i = 0; i < spec.in; ++i) p[i] += dv * wr[i];
      }
    }
    if (params.layers()[l - 1].activation == Activation::Relu)
      for (std::size_t k = 0; k < prev.data.size(); ++k)
        if (a_prev.data[k] <= 0.0) prev.data[k] = 0.0;
    delta = std::move(prev);
  }
  return grad;
}

/// Classical momentum SGD: v' = momentum * v + g, w' = w - lr * v'.
inline std::pair<ModelParams, GradientVector> sgd_step(const ModelParams& params, const GradientVector& grad,
                                                       double lr, const GradientVector& momentum_state,
                                                       double momentum) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (grad.size() != params.size() || momentum_state.size() != params.size())
    throw ConfigError("gradient or momentum shape does not match parameters");
  ModelParams next = params;
  GradientVector velocity(params.size());
  auto w = next.values();
  for (std::size_t j = 0; j < w.size(); ++j) {
    velocity[j] = momentum * momentum_state[j] + grad[j];
    w[j] -= lr * velocity[j];
  }
  return {std::move(next), std::move(velocity)};
}

}  // namespace cwmp
