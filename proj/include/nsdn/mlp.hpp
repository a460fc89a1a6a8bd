#pragma once

// Five-layer fully connected base network and its three-channel use.
//
// Layer widths are 45, 400, 66, 200, 66 on a 45-coefficient input. The
// first two layers are rectified; the last three are affine so the output
// SH coefficients can take either sign. All three channels (labeled input,
// paired input a, paired input b) run through the same parameter store.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "nsdn/errors.hpp"

namespace nsdn {

constexpr int kLayerCount = 5;
constexpr Eigen::Index kInputDim = 45;
constexpr std::array<Eigen::Index, kLayerCount> kLayerDims{45, 400, 66, 200, 66};
constexpr Eigen::Index kOutputDim = kLayerDims.back();

enum class Activation { relu, identity };

constexpr std::array<Activation, kLayerCount> kActivations{
    Activation::relu, Activation::relu, Activation::identity, Activation::identity, Activation::identity};

constexpr Eigen::Index layer_input_dim(int k) { return k == 0 ? kInputDim : kLayerDims[k - 1]; }

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

template <typename Scalar>
struct DenseLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix W;  // out x in
  Vector b;
};

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Mlp() {
    for (int k = 0; k < kLayerCount; ++k) {
      layers_[k].W = Matrix::Zero(kLayerDims[k], layer_input_dim(k));
      layers_[k].b = Vector::Zero(kLayerDims[k]);
    }
  }

  static Mlp zeros() { return Mlp(); }

  // He-uniform on rectified layers, Xavier-uniform on affine layers, zero
  // biases.
  template <typename Urbg>
  static Mlp initialized(Urbg& rng) {
    Mlp m;
    for (int k = 0; k < kLayerCount; ++k) {
      const double fan_in = static_cast<double>(layer_input_dim(k));
      const double fan_out = static_cast<double>(kLayerDims[k]);
      const double limit = kActivations[k] == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                               : std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      auto& W = m.layers_[k].W;
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = Scalar(u(rng));
      }
    }
    return m;
  }

  DenseLayer<Scalar>& layer(int k) { return layers_[k]; }
  const DenseLayer<Scalar>& layer(int k) const { return layers_[k]; }

  static constexpr Eigen::Index parameter_count() {
    Eigen::Index n = 0;
    for (int k = 0; k < kLayerCount; ++k) n += kLayerDims[k] * (layer_input_dim(k) + 1);
    return n;
  }

  // Flat view: per layer, W row-major then b.
  Vector flatten() const {
    Vector out(parameter_count());
    Eigen::Index pos = 0;
    for (const auto& L : layers_) {
      for (Eigen::Index i = 0; i < L.W.rows(); ++i) {
        out.segment(pos, L.W.cols()) = L.W.row(i).transpose();
        pos += L.W.cols();
      }
      out.segment(pos, L.b.size()) = L.b;
      pos += L.b.size();
    }
    return out;
  }

  static Mlp unflatten(const Eigen::Ref<const Vector>& flat) {
    if (flat.size() != parameter_count()) throw ValidationError("flat parameter vector has wrong length");
    Mlp m;
    Eigen::Index pos = 0;
    for (auto& L : m.layers_) {
      for (Eigen::Index i = 0; i < L.W.rows(); ++i) {
        L.W.row(i) = flat.segment(pos, L.W.cols()).transpose();
        pos += L.W.cols();
      }
      L.b = flat.segment(pos, L.b.size());
      pos += L.b.size();
    }
    return m;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    for (int k = 0; k < kLayerCount; ++k) {
      if (a.layers_[k].W != b.layers_[k].W || a.layers_[k].b != b.layers_[k].b) return false;
    }
    return true;
  }

 private:
  std::array<DenseLayer<Scalar>, kLayerCount> layers_;
};

using MlpModel = Mlp<double>;
template <typename Scalar>
using MlpGradients = Mlp<Scalar>;

template <typename Scalar>
struct ForwardCache {
  using Matrix = typename Mlp<Scalar>::Matrix;
  std::array<Matrix, kLayerCount> pre;      // W h + b
  std::array<Matrix, kLayerCount + 1> act;  // act[0] is the input
};

// Column-batched forward pass; inputs are kInputDim x m.
template <typename Scalar>
typename Mlp<Scalar>::Matrix forward(const Mlp<Scalar>& model,
                                     const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& x,
                                     ForwardCache<Scalar>* cache = nullptr) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  if (x.rows() != kInputDim) {
    throw ValidationError("network input must have " + std::to_string(kInputDim) + " rows, got " +
                          std::to_string(x.rows()));
  }
  Matrix h = x;
  if (cache) cache->act[0] = h;
  for (int k = 0; k < kLayerCount; ++k) {
    const auto& L = model.layer(k);
    Matrix z = L.W * h;
    z.colwise() += L.b;
    if (cache) cache->pre[k] = z;
    h = kActivations[k] == Activation::relu ? Matrix(z.cwiseMax(Scalar(0))) : z;
    if (cache) cache->act[k + 1] = h;
  }
  if (!h.allFinite()) throw NonFiniteError("non-finite value in network output");
  return h;
}

template <typename Scalar>
typename Mlp<Scalar>::Vector forward_one(const Mlp<Scalar>& model,
                                         const Eigen::Ref<const typename Mlp<Scalar>::Vector>& x) {
  if (!x.allFinite()) throw NonFiniteError("non-finite network input");
  return forward<Scalar>(model, x);
}

// Accumulates d(objective)/d(parameters) into grads given d(objective)/d(output).
template <typename Scalar>
void backward(const Mlp<Scalar>& model, const ForwardCache<Scalar>& cache,
              typename Mlp<Scalar>::Matrix d_out, MlpGradients<Scalar>& grads) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  Matrix d = std::move(d_out);
  for (int k = kLayerCount - 1; k >= 0; --k) {
    if (kActivations[k] == Activation::relu) {
      // Subgradient 0 at the kink.
      d = (cache.pre[k].array() > Scalar(0)).select(d, Scalar(0));
    }
    grads.layer(k).W.noalias() += d * cache.act[k].transpose();
    grads.layer(k).b += d.rowwise().sum();
    if (k > 0) d = model.layer(k).W.transpose() * d;
  }
}

template <typename Scalar>
struct TrainingBatch {
  using Matrix = typename Mlp<Scalar>::Matrix;

  Matrix x;       // 45 x m labeled inputs
  Matrix y_true;  // 66 x m targets
  Matrix xa;      // 45 x m paired inputs, or empty
  Matrix xb;

  Eigen::Index size() const { return x.cols(); }
  bool has_pairs() const { return xa.cols() > 0; }

  void validate() const {
    if (x.cols() == 0) throw ValidationError("empty training batch");
    if (x.rows() != kInputDim || y_true.rows() != kOutputDim || y_true.cols() != x.cols()) {
      throw ValidationError("labeled batch shapes do not match the network");
    }
    if (xa.cols() != xb.cols() || (xa.cols() != 0 && xa.cols() != x.cols())) {
      throw ValidationError("paired count must equal the labeled count");
    }
    if (xa.cols() != 0 && (xa.rows() != kInputDim || xb.rows() != kInputDim)) {
      throw ValidationError("paired batch shapes do not match the network");
    }
    if (!x.allFinite() || !y_true.allFinite() || !xa.allFinite() || !xb.allFinite()) {
      throw NonFiniteError("non-finite value in training batch");
    }
  }
};

template <typename Scalar>
struct LossBreakdown {
  Scalar supervised{0};
  Scalar consistency{0};
  Scalar total{0};
};

// L = (1/m) sum ||y_true - f(x)||^2 + lambda (1/m) sum ||f(xa) - f(xb)||^2
template <typename Scalar>
LossBreakdown<Scalar> loss(const Mlp<Scalar>& model, const TrainingBatch<Scalar>& batch, Scalar lambda) {
  batch.validate();
  const Scalar m = Scalar(batch.size());
  LossBreakdown<Scalar> out;
  out.supervised = (batch.y_true - forward<Scalar>(model, batch.x)).squaredNorm() / m;
  if (batch.has_pairs()) {
    out.consistency = (forward<Scalar>(model, batch.xa) - forward<Scalar>(model, batch.xb)).squaredNorm() / m;
  }
  out.total = out.supervised + lambda * out.consistency;
  return out;
}

// Exact gradient of loss().total; the paired channels are skipped when
// lambda is zero.
template <typename Scalar>
MlpGradients<Scalar> gradients(const Mlp<Scalar>& model, const TrainingBatch<Scalar>& batch, Scalar lambda,
                               LossBreakdown<Scalar>* breakdown = nullptr) {
  batch.validate();
  const Scalar m = Scalar(batch.size());
  MlpGradients<Scalar> g = MlpGradients<Scalar>::zeros();
  LossBreakdown<Scalar> parts;

  ForwardCache<Scalar> cache;
  const auto residual = (forward<Scalar>(model, batch.x, &cache) - batch.y_true).eval();
  parts.supervised = residual.squaredNorm() / m;
  backward<Scalar>(model, cache, (Scalar(2) / m) * residual, g);

  if (batch.has_pairs() && lambda != Scalar(0)) {
    ForwardCache<Scalar> cache_a;
    ForwardCache<Scalar> cache_b;
    const auto diff =
        (forward<Scalar>(model, batch.xa, &cache_a) - forward<Scalar>(model, batch.xb, &cache_b)).eval();
    parts.consistency = diff.squaredNorm() / m;
    const auto d_a = ((Scalar(2) * lambda / m) * diff).eval();
    backward<Scalar>(model, cache_a, d_a, g);
    backward<Scalar>(model, cache_b, -d_a, g);
  } else if (batch.has_pairs()) {
    parts.consistency =
        (forward<Scalar>(model, batch.xa) - forward<Scalar>(model, batch.xb)).squaredNorm() / m;
  }
  parts.total = parts.supervised + lambda * parts.consistency;
  if (breakdown) *breakdown = parts;
  return g;
}

struct RmsPropConfig {
  double learning_rate = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
};

// Running mean of squared gradients, shaped like the model.
template <typename Scalar>
struct RmsPropState {
  Mlp<Scalar> mean_square = Mlp<Scalar>::zeros();
};

// v <- rho v + (1 - rho) g^2 ;  theta <- theta - lr g / (sqrt(v) + eps)
template <typename Scalar>
void rmsprop_step(Mlp<Scalar>& model, const MlpGradients<Scalar>& grads, RmsPropState<Scalar>& state,
                  const RmsPropConfig& config) {
  const Scalar rho(config.rho);
  const Scalar lr(config.learning_rate);
  const Scalar eps(config.epsilon);
  auto update = [&](auto& theta, const auto& g, auto& v) {
    v.array() = rho * v.array() + (Scalar(1) - rho) * g.array().square();
    theta.array() -= lr * g.array() / (v.array().sqrt() + eps);
  };
  for (int k = 0; k < kLayerCount; ++k) {
    auto& L = model.layer(k);
    auto& V = state.mean_square.layer(k);
    const auto& G = grads.layer(k);
    if (L.W.rows() != G.W.rows() || L.W.cols() != G.W.cols() || V.W.rows() != L.W.rows()) {
      throw ValidationError("rmsprop_step: shape mismatch");
    }
    update(L.W, G.W, V.W);
    update(L.b, G.b, V.b);
  }
}

}  // namespace nsdn
