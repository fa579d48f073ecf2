#pragma once

// Small feed-forward networks with reverse-mode gradients and first-order
// optimisers. Parameters are stored as T; reductions and gradients use double.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "citerec/errors.hpp"
#include "citerec/util.hpp"

namespace citerec::nn {

enum class Activation { identity, relu, sigmoid };

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::identity, "identity"},
                                          {Activation::relu, "relu"},
                                          {Activation::sigmoid, "sigmoid"}})

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::identity:
      break;
  }
  return x;
}

// d activation / d pre-activation, expressed through the pre-activation.
inline double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::identity:
      break;
  }
  return 1.0;
}

template <typename T>
struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<T> weight;  // out_dim x in_dim, row-major
  std::vector<T> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out) : in_dim(in), out_dim(out), weight(in * out, T(0)), bias(out, T(0)) {}

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Parameter gradients of an Mlp, shaped like its layers.
struct MlpGradients {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;

  void zero() {
    for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
  }

  void collect(std::vector<std::span<double>>& out) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
      out.emplace_back(weight[l]);
      out.emplace_back(bias[l]);
    }
  }
};

// Four interleaved partial sums, combined in a fixed order.
template <typename T>
double dot(const T* a, const T* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    s1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
    s2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
    s3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return (s0 + s1) + (s2 + s3);
}

// Dense layers with ReLU between them and a configurable output activation.
template <typename T>
class Mlp {
 public:
  struct Tape {
    std::vector<std::vector<T>> inputs;  // input of each layer
    std::vector<std::vector<double>> pre;  // pre-activation of each layer
    std::vector<T> output;
  };

  Mlp() = default;

  // widths = {in, hidden..., out}; parameters start at zero.
  Mlp(const std::vector<std::size_t>& widths, Activation output) : output_(output) {
    if (widths.size() < 2) throw ValidationError("an MLP needs at least an input and an output width");
    for (std::size_t w : widths) {
      if (w == 0) throw ValidationError("MLP widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) layers_.emplace_back(widths[l], widths[l + 1]);
  }

  // Uniform He fan-in initialisation, zero biases.
  static Mlp he_uniform(const std::vector<std::size_t>& widths, Activation output, Rng& rng) {
    Mlp m(widths, output);
    for (auto& layer : m.layers_) {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim));
      for (auto& w : layer.weight) w = static_cast<T>(rng.uniform(-bound, bound));
    }
    return m;
  }

  std::size_t in_dim() const { return layers_.front().in_dim; }
  std::size_t out_dim() const { return layers_.back().out_dim; }
  Activation output_activation() const { return output_; }
  std::vector<DenseLayer<T>>& layers() { return layers_; }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w;
    if (layers_.empty()) return w;
    w.push_back(in_dim());
    for (const auto& l : layers_) w.push_back(l.out_dim);
    return w;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  std::vector<T> forward(std::span<const T> x, Tape* tape = nullptr) const {
    if (x.size() != in_dim()) {
      throw ValidationError("MLP input has " + std::to_string(x.size()) + " entries, expected " +
                            std::to_string(in_dim()));
    }
    if (tape) {
      tape->inputs.resize(layers_.size());
      tape->pre.resize(layers_.size());
    }
    std::vector<T> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const Activation act = l + 1 == layers_.size() ? output_ : Activation::relu;
      std::vector<T> next(layer.out_dim);
      std::vector<double>* pre = nullptr;
      if (tape) {
        tape->inputs[l] = cur;
        pre = &tape->pre[l];
        pre->resize(layer.out_dim);
      }
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        const T* w = layer.weight.data() + o * layer.in_dim;
        const double z = static_cast<double>(layer.bias[o]) + dot(w, cur.data(), layer.in_dim);
        if (pre) (*pre)[o] = z;
        next[o] = static_cast<T>(activate(act, z));
      }
      cur = std::move(next);
    }
    for (T v : cur) {
      if (!std::isfinite(static_cast<double>(v))) throw DivergenceError("MLP produced a non-finite output");
    }
    if (tape) tape->output = cur;
    return cur;
  }

  MlpGradients zero_gradients() const {
    MlpGradients g;
    for (const auto& l : layers_) {
      g.weight.emplace_back(l.weight.size(), 0.0);
      g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  // Accumulates parameter gradients into `grads`; returns d loss / d input.
  std::vector<double> backward(const Tape& tape, std::span<const double> upstream, MlpGradients& grads) const {
    if (upstream.size() != out_dim()) throw ValidationError("upstream gradient has the wrong size");
    if (tape.pre.size() != layers_.size()) throw ValidationError("tape does not match this network");
    if (grads.weight.size() != layers_.size()) throw ValidationError("gradient buffers do not match this network");
    std::vector<double> delta(upstream.size());
    for (std::size_t o = 0; o < delta.size(); ++o) delta[o] = upstream[o] * activate_grad(output_, tape.pre.back()[o]);
    std::vector<double> dx;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& layer = layers_[l];
      const auto& input = tape.inputs[l];
      auto& gw = grads.weight[l];
      auto& gb = grads.bias[l];
      dx.assign(layer.in_dim, 0.0);
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* gwo = gw.data() + o * layer.in_dim;
        const T* w = layer.weight.data() + o * layer.in_dim;
        for (std::size_t i = 0; i < layer.in_dim; ++i) {
          gwo[i] += d * static_cast<double>(input[i]);
          dx[i] += d * static_cast<double>(w[i]);
        }
      }
      if (l > 0) {
        const auto& pre = tape.pre[l - 1];
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= activate_grad(Activation::relu, pre[i]);
        delta = dx;
      }
    }
    return dx;
  }

  void collect(std::vector<std::span<T>>& out) {
    for (auto& l : layers_) {
      out.emplace_back(l.weight);
      out.emplace_back(l.bias);
    }
  }

  void flatten_into(std::vector<T>& out) const {
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weight.begin(), l.weight.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
  }

  // Reads parameters in flatten order; returns the number consumed.
  std::size_t assign_from(std::span<const T> flat) {
    std::size_t pos = 0;
    for (auto& l : layers_) {
      for (auto* buf : {&l.weight, &l.bias}) {
        if (pos + buf->size() > flat.size()) throw FormatError("parameter payload is too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + buf->size()), buf->begin());
        pos += buf->size();
      }
    }
    return pos;
  }

  template <typename U>
  Mlp<U> cast() const {
    Mlp<U> m(widths(), output_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& dst = m.layers()[l];
      for (std::size_t i = 0; i < dst.weight.size(); ++i) dst.weight[i] = static_cast<U>(layers_[l].weight[i]);
      for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] = static_cast<U>(layers_[l].bias[i]);
    }
    return m;
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<DenseLayer<T>> layers_;
  Activation output_ = Activation::identity;
};

enum class UpdateRule { sgd_momentum, adam };

NLOHMANN_JSON_SERIALIZE_ENUM(UpdateRule, {{UpdateRule::sgd_momentum, "sgd_momentum"}, {UpdateRule::adam, "adam"}})

struct OptimizerSettings {
  UpdateRule rule = UpdateRule::adam;
  double step_size = 1e-3;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ValidationError("step size must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  }

  friend bool operator==(const OptimizerSettings&, const OptimizerSettings&) = default;
};

// Optimiser state with moment buffers aligned to the parameter list it is first applied to.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings) : settings_(settings) { settings_.validate(); }

  const OptimizerSettings& settings() const { return settings_; }
  long step_count() const { return step_; }

  template <typename T>
  void apply(std::span<const std::span<T>> params, std::span<const std::span<double>> grads) {
    if (params.size() != grads.size()) throw ValidationError("parameter and gradient lists differ in length");
    for (std::size_t t = 0; t < params.size(); ++t) {
      if (params[t].size() != grads[t].size()) throw ValidationError("parameter/gradient shape mismatch");
      for (double g : grads[t]) {
        if (!std::isfinite(g)) throw DivergenceError("non-finite gradient");
      }
    }
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.size(), 0.0);
        if (settings_.rule == UpdateRule::adam) second_.emplace_back(p.size(), 0.0);
      }
    } else {
      if (first_.size() != params.size()) throw ValidationError("optimizer state does not match parameters");
      for (std::size_t t = 0; t < params.size(); ++t) {
        if (first_[t].size() != params[t].size()) throw ValidationError("optimizer state does not match parameters");
      }
    }
    ++step_;
    const double lr = settings_.step_size;
    if (settings_.rule == UpdateRule::sgd_momentum) {
      for (std::size_t t = 0; t < params.size(); ++t) {
        auto& v = first_[t];
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] = settings_.momentum * v[i] + grads[t][i];
          params[t][i] = static_cast<T>(static_cast<double>(params[t][i]) - lr * v[i]);
        }
      }
      return;
    }
    const double c1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(step_));
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto& m = first_[t];
      auto& v = second_[t];
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double g = grads[t][i];
        m[i] = settings_.beta1 * m[i] + (1.0 - settings_.beta1) * g;
        v[i] = settings_.beta2 * v[i] + (1.0 - settings_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        params[t][i] = static_cast<T>(static_cast<double>(params[t][i]) - lr * mhat / (std::sqrt(vhat) + settings_.epsilon));
      }
    }
  }

 private:
  OptimizerSettings settings_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  long step_ = 0;
};

}  // namespace citerec::nn
