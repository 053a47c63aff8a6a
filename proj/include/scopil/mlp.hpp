#pragma once

// Dense feed-forward networks with hand-written reverse-mode gradients and an
// adaptive-moment optimizer. Templated on the scalar so that training runs in
// float while gradient checks run the identical code in double.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace scopil::net {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation { Relu, Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Layer {
  Matrix<T> weight;  // out x in
  Vector<T> bias;    // out
  Activation activation = Activation::Identity;
};

template <typename T>
struct MlpParams {
  std::vector<Layer<T>> layers;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

  std::vector<int> sizes() const {
    std::vector<int> s;
    if (layers.empty()) return s;
    s.push_back(input_dim());
    for (const auto& l : layers) s.push_back(static_cast<int>(l.weight.rows()));
    return s;
  }

  Activation hidden_activation() const {
    return layers.size() > 1 ? layers.front().activation : Activation::Identity;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Zero-valued network: hidden layers use `hidden`, the output is linear.
  static MlpParams zeros(std::span<const int> sizes, Activation hidden = Activation::Relu) {
    if (sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
    MlpParams p;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      Layer<T> l;
      l.weight = Matrix<T>::Zero(sizes[i + 1], sizes[i]);
      l.bias = Vector<T>::Zero(sizes[i + 1]);
      l.activation = (i + 2 == sizes.size()) ? Activation::Identity : hidden;
      p.layers.push_back(std::move(l));
    }
    return p;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static MlpParams init(std::span<const int> sizes, std::mt19937_64& rng, Activation hidden = Activation::Relu) {
    MlpParams p = zeros(sizes, hidden);
    for (auto& l : p.layers) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = static_cast<T>(u(rng));
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = static_cast<T>(u(rng));
    }
    return p;
  }

  template <typename U>
  MlpParams<U> cast() const {
    MlpParams<U> out;
    for (const auto& l : layers) out.layers.push_back({l.weight.template cast<U>(), l.bias.template cast<U>(), l.activation});
    return out;
  }

  bool same_shape(const MlpParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].weight.rows() != o.layers[i].weight.rows() || layers[i].weight.cols() != o.layers[i].weight.cols())
        return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  /// Flat view helpers used by finite-difference tests.
  T& at(std::size_t flat) {
    for (auto& l : layers) {
      const auto nw = static_cast<std::size_t>(l.weight.size());
      if (flat < nw) return l.weight.data()[flat];
      flat -= nw;
      const auto nb = static_cast<std::size_t>(l.bias.size());
      if (flat < nb) return l.bias.data()[flat];
      flat -= nb;
    }
    throw std::out_of_range("flat parameter index");
  }
  T at(std::size_t flat) const { return const_cast<MlpParams*>(this)->at(flat); }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
      if (a.layers[i].weight != b.layers[i].weight || a.layers[i].bias != b.layers[i].bias ||
          a.layers[i].activation != b.layers[i].activation)
        return false;
    return true;
  }
};

/// Per-parameter partial derivatives, shaped like the network they belong to.
template <typename T>
struct GradientBundle {
  std::vector<Matrix<T>> weight;
  std::vector<Vector<T>> bias;

  static GradientBundle zeros_like(const MlpParams<T>& p) {
    GradientBundle g;
    for (const auto& l : p.layers) {
      g.weight.push_back(Matrix<T>::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector<T>::Zero(l.bias.size()));
    }
    return g;
  }

  GradientBundle& operator+=(const GradientBundle& o) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] += o.weight[i];
      bias[i] += o.bias[i];
    }
    return *this;
  }

  GradientBundle& operator*=(T s) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] *= s;
      bias[i] *= s;
    }
    return *this;
  }

  bool all_finite() const {
    for (std::size_t i = 0; i < weight.size(); ++i)
      if (!weight[i].allFinite() || !bias[i].allFinite()) return false;
    return true;
  }

  bool congruent(const MlpParams<T>& p) const {
    if (weight.size() != p.layers.size() || bias.size() != p.layers.size()) return false;
    for (std::size_t i = 0; i < weight.size(); ++i)
      if (weight[i].rows() != p.layers[i].weight.rows() || weight[i].cols() != p.layers[i].weight.cols() ||
          bias[i].size() != p.layers[i].bias.size())
        return false;
    return true;
  }

  T at(std::size_t flat) const {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      const auto nw = static_cast<std::size_t>(weight[i].size());
      if (flat < nw) return weight[i].data()[flat];
      flat -= nw;
      const auto nb = static_cast<std::size_t>(bias[i].size());
      if (flat < nb) return bias[i].data()[flat];
      flat -= nb;
    }
    throw std::out_of_range("flat gradient index");
  }

  T squared_norm() const {
    T s = 0;
    for (std::size_t i = 0; i < weight.size(); ++i) s += weight[i].squaredNorm() + bias[i].squaredNorm();
    return s;
  }
};

/// Intermediate values kept by a forward pass for the backward pass.
template <typename T>
struct ForwardCache {
  std::vector<Matrix<T>> inputs;  // input of each layer
  std::vector<Matrix<T>> pre;     // pre-activation of each layer
};

namespace detail {

template <typename T>
void apply_activation(Matrix<T>& z, Activation a) {
  switch (a) {
    case Activation::Relu: z = z.cwiseMax(T(0)); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Identity: break;
  }
}

// Multiplies the upstream gradient in place by the activation derivative.
template <typename T>
void activation_backward(Matrix<T>& grad, const Matrix<T>& pre, Activation a) {
  switch (a) {
    case Activation::Relu: grad = (pre.array() > T(0)).select(grad, T(0)); break;
    case Activation::Tanh: grad = (grad.array() * (T(1) - pre.array().tanh().square())).matrix(); break;
    case Activation::Identity: break;
  }
}

}  // namespace detail

/// Batched forward pass; each column of `x` is one input.
template <typename T>
Matrix<T> forward(const MlpParams<T>& p, const Matrix<T>& x) {
  if (p.layers.empty()) throw ShapeError("forward on an empty network");
  if (x.rows() != p.input_dim())
    throw ShapeError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(p.input_dim()));
  Matrix<T> a = x;
  for (const auto& l : p.layers) {
    Matrix<T> z = l.weight * a;
    z.colwise() += l.bias;
    detail::apply_activation(z, l.activation);
    a = std::move(z);
  }
  return a;
}

template <typename T>
Vector<T> forward(const MlpParams<T>& p, const Vector<T>& x) {
  return forward(p, Matrix<T>(x));
}

template <typename T>
Matrix<T> forward(const MlpParams<T>& p, const Matrix<T>& x, ForwardCache<T>& cache) {
  if (p.layers.empty()) throw ShapeError("forward on an empty network");
  if (x.rows() != p.input_dim())
    throw ShapeError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(p.input_dim()));
  cache.inputs.clear();
  cache.pre.clear();
  Matrix<T> a = x;
  for (const auto& l : p.layers) {
    Matrix<T> z = l.weight * a;
    z.colwise() += l.bias;
    cache.inputs.push_back(std::move(a));
    cache.pre.push_back(z);
    detail::apply_activation(z, l.activation);
    a = std::move(z);
  }
  return a;
}

/// Gradients of mean_i loss_i, where column i of `loss_tail` holds
/// d loss_i / d output_i for the i-th cached input.
template <typename T>
GradientBundle<T> backward(const MlpParams<T>& p, const ForwardCache<T>& cache, const Matrix<T>& loss_tail) {
  if (cache.pre.size() != p.layers.size()) throw ShapeError("forward cache does not match network");
  const auto batch = cache.inputs.front().cols();
  if (loss_tail.rows() != p.output_dim() || loss_tail.cols() != batch)
    throw ShapeError("loss tail shape does not match network output");
  GradientBundle<T> g;
  g.weight.resize(p.layers.size());
  g.bias.resize(p.layers.size());
  const T inv_batch = T(1) / static_cast<T>(batch);
  Matrix<T> delta = loss_tail;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    detail::activation_backward(delta, cache.pre[k], p.layers[k].activation);
    g.weight[k].noalias() = delta * cache.inputs[k].transpose();
    g.weight[k] *= inv_batch;
    g.bias[k] = delta.rowwise().sum() * inv_batch;
    if (k > 0) {
      Matrix<T> up = p.layers[k].weight.transpose() * delta;
      delta = std::move(up);
    }
  }
  return g;
}

/// Convenience wrapper running the forward pass itself.
template <typename T>
GradientBundle<T> backward(const MlpParams<T>& p, const Matrix<T>& x, const Matrix<T>& loss_tail) {
  ForwardCache<T> cache;
  forward(p, x, cache);
  return backward(p, cache, loss_tail);
}

/// Column-wise max-subtracted log-softmax.
template <typename T>
Matrix<T> log_softmax(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const T m = logits.col(j).maxCoeff();
    const T lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

template <typename T>
Vector<T> log_softmax(const Vector<T>& logits) {
  return log_softmax(Matrix<T>(logits)).col(0);
}

template <typename T>
struct OptState {
  GradientBundle<T> m;
  GradientBundle<T> v;
  std::int64_t step = 0;
  T lr = T(3e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  static OptState for_params(const MlpParams<T>& p, T lr) {
    OptState s;
    s.m = GradientBundle<T>::zeros_like(p);
    s.v = GradientBundle<T>::zeros_like(p);
    s.lr = lr;
    return s;
  }
};

/// One bias-corrected Adam descent step.
template <typename T>
void opt_step(MlpParams<T>& p, const GradientBundle<T>& g, OptState<T>& s) {
  if (!g.congruent(p) || !s.m.congruent(p) || !s.v.congruent(p))
    throw ShapeError("optimizer state and gradients must match the network");
  if (!g.all_finite()) throw NonFiniteError("non-finite gradient passed to opt_step");
  s.step += 1;
  const T c1 = T(1) - static_cast<T>(std::pow(static_cast<double>(s.beta1), static_cast<double>(s.step)));
  const T c2 = T(1) - static_cast<T>(std::pow(static_cast<double>(s.beta2), static_cast<double>(s.step)));
  const T step_size = s.lr / c1;
  const T inv_c2 = T(1) / c2;
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = s.beta1 * m + (T(1) - s.beta1) * grad;
    v = s.beta2 * v + (T(1) - s.beta2) * grad.cwiseProduct(grad);
    param.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + s.eps);
  };
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    update(p.layers[k].weight, g.weight[k], s.m.weight[k], s.v.weight[k]);
    update(p.layers[k].bias, g.bias[k], s.m.bias[k], s.v.bias[k]);
  }
}

}  // namespace scopil::net
