#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>

#include "concon/error.hpp"
#include "concon/rng.hpp"
#include "concon/scene.hpp"

namespace concon {

inline constexpr int kHiddenUnits = 64;
inline constexpr int kClassCount = 2;

template <typename Scalar>
using FeatureMatrix = Eigen::Matrix<Scalar, kObjectTypeCount, Eigen::Dynamic>;
template <typename Scalar>
using LogitMatrix = Eigen::Matrix<Scalar, kClassCount, Eigen::Dynamic>;
template <typename Scalar>
using ParamVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Per-type multiplicities: four copies of type 7 give a 4 at index 7.
template <typename Scalar = double>
Eigen::Matrix<Scalar, kObjectTypeCount, 1> featurize(const Scene& scene) {
  Eigen::Matrix<Scalar, kObjectTypeCount, 1> x = Eigen::Matrix<Scalar, kObjectTypeCount, 1>::Zero();
  for (ObjectType t : scene.types()) x(t) += Scalar(1);
  return x;
}

template <typename Scalar = double>
FeatureMatrix<Scalar> featurize(std::span<const Scene> scenes) {
  FeatureMatrix<Scalar> x = FeatureMatrix<Scalar>::Zero(kObjectTypeCount, static_cast<Eigen::Index>(scenes.size()));
  for (std::size_t j = 0; j < scenes.size(); ++j) {
    for (ObjectType t : scenes[j].types()) x(t, static_cast<Eigen::Index>(j)) += Scalar(1);
  }
  return x;
}

// 96 -> 64 (relu) -> 2. All parameters live in one flat vector laid out as
// W1 (column-major), b1, W2 (column-major), b2; the layer views map into it.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = ParamVector<Scalar>;

  static constexpr Eigen::Index kW1 = kHiddenUnits * kObjectTypeCount;
  static constexpr Eigen::Index kB1 = kHiddenUnits;
  static constexpr Eigen::Index kW2 = kClassCount * kHiddenUnits;
  static constexpr Eigen::Index kB2 = kClassCount;
  static constexpr Eigen::Index kParamCount = kW1 + kB1 + kW2 + kB2;

  Mlp() : params_(Vector::Zero(kParamCount)) {}
  explicit Mlp(Vector params) : params_(std::move(params)) {
    if (params_.size() != kParamCount) throw Error("format", "parameter vector has wrong length");
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static Mlp initialized(Rng& rng) {
    Mlp m;
    const Scalar a1 = Scalar(1) / std::sqrt(Scalar(kObjectTypeCount));
    const Scalar a2 = Scalar(1) / std::sqrt(Scalar(kHiddenUnits));
    for (Eigen::Index i = 0; i < kParamCount; ++i) {
      const Scalar a = i < kW1 + kB1 ? a1 : a2;
      m.params_(i) = Scalar(rng.uniform(-1.0, 1.0)) * a;
    }
    return m;
  }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  auto w1() const { return Eigen::Map<const Matrix>(params_.data(), kHiddenUnits, kObjectTypeCount); }
  auto b1() const { return Eigen::Map<const Vector>(params_.data() + kW1, kB1); }
  auto w2() const { return Eigen::Map<const Matrix>(params_.data() + kW1 + kB1, kClassCount, kHiddenUnits); }
  auto b2() const { return Eigen::Map<const Vector>(params_.data() + kW1 + kB1 + kW2, kB2); }

 private:
  Vector params_;
};

template <typename Scalar, typename Derived>
LogitMatrix<Scalar> forward(const Mlp<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  const auto hidden = ((model.w1() * x).colwise() + model.b1()).cwiseMax(Scalar(0)).eval();
  LogitMatrix<Scalar> z = (model.w2() * hidden).colwise() + model.b2();
  if (!z.allFinite()) throw Error("numeric", "non-finite logits");
  return z;
}

// Class 1 iff its logit is strictly larger; ties go to class 0.
template <typename Derived>
int predict(const Eigen::MatrixBase<Derived>& logits) {
  return logits(1) > logits(0) ? 1 : 0;
}

template <typename Scalar>
struct EwcPenalty {
  const ParamVector<Scalar>* fisher = nullptr;
  const ParamVector<Scalar>* anchor = nullptr;
  Scalar lambda = Scalar(0);
};

// Distillation towards logits recorded when the replayed entries were stored.
template <typename Scalar>
struct DistillPenalty {
  FeatureMatrix<Scalar> x;
  LogitMatrix<Scalar> target;
  Scalar alpha = Scalar(0);
};

template <typename Scalar>
struct Penalty {
  std::optional<EwcPenalty<Scalar>> ewc;
  std::optional<DistillPenalty<Scalar>> der;
};

namespace detail {

// Accumulates the gradient of sum_j dz(:, j) . z(:, j) for z = forward(x).
template <typename Scalar, typename Derived>
void backprop(const Mlp<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
              const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& pre,
              const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& hidden, const LogitMatrix<Scalar>& dz,
              ParamVector<Scalar>& grad) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  using Vector = ParamVector<Scalar>;
  constexpr auto kW1 = Mlp<Scalar>::kW1;
  constexpr auto kB1 = Mlp<Scalar>::kB1;
  constexpr auto kW2 = Mlp<Scalar>::kW2;
  Eigen::Map<Matrix> gw1(grad.data(), kHiddenUnits, kObjectTypeCount);
  Eigen::Map<Vector> gb1(grad.data() + kW1, kB1);
  Eigen::Map<Matrix> gw2(grad.data() + kW1 + kB1, kClassCount, kHiddenUnits);
  Eigen::Map<Vector> gb2(grad.data() + kW1 + kB1 + kW2, kClassCount);

  gw2.noalias() += dz * hidden.transpose();
  gb2 += dz.rowwise().sum();
  const Matrix dh = ((model.w2().transpose() * dz).array() * (pre.array() > Scalar(0)).template cast<Scalar>()).matrix();
  gw1.noalias() += dh * x.transpose();
  gb1 += dh.rowwise().sum();
}

}  // namespace detail

// mean softmax cross-entropy over the batch
//   + (lambda/2) sum_i F_i (theta_i - theta*_i)^2                (ewc)
//   + alpha * mean over replayed entries and logits of (z - z*)^2 (der)
// Writes the exact gradient into *grad when given. Throws Error("range") for
// labels outside {0, 1} and Error("precondition") for an empty batch.
template <typename Scalar, typename Derived>
Scalar loss_and_grad(const Mlp<Scalar>& model, const Eigen::MatrixBase<Derived>& x, std::span<const int> labels,
                     const Penalty<Scalar>& penalty = {}, ParamVector<Scalar>* grad = nullptr) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Eigen::Index n = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) {
    throw Error("precondition", "batch must be nonempty with one label per example");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("range", "label " + std::to_string(y) + " outside {0, 1}");
  }
  if (grad) *grad = ParamVector<Scalar>::Zero(Mlp<Scalar>::kParamCount);

  const Matrix pre = (model.w1() * x).colwise() + model.b1();
  const Matrix hidden = pre.cwiseMax(Scalar(0));
  const LogitMatrix<Scalar> z = (model.w2() * hidden).colwise() + model.b2();
  if (!z.allFinite()) throw Error("numeric", "non-finite logits");

  Scalar loss(0);
  LogitMatrix<Scalar> dz(kClassCount, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar m = z.col(j).maxCoeff();
    const Scalar e0 = std::exp(z(0, j) - m);
    const Scalar e1 = std::exp(z(1, j) - m);
    const Scalar lse = m + std::log(e0 + e1);
    const int y = labels[static_cast<std::size_t>(j)];
    loss += lse - z(y, j);
    dz(0, j) = e0 / (e0 + e1);
    dz(1, j) = e1 / (e0 + e1);
    dz(y, j) -= Scalar(1);
  }
  loss /= Scalar(n);
  if (grad) {
    dz /= Scalar(n);
    detail::backprop(model, x, pre, hidden, dz, *grad);
  }

  if (penalty.ewc) {
    const auto& e = *penalty.ewc;
    const auto d = (model.params() - *e.anchor).eval();
    loss += e.lambda / Scalar(2) * (e.fisher->array() * d.array().square()).sum();
    if (grad) *grad += e.lambda * (e.fisher->array() * d.array()).matrix();
  }

  if (penalty.der && penalty.der->x.cols() > 0) {
    const auto& d = *penalty.der;
    const Scalar count = Scalar(d.x.cols() * kClassCount);
    const Matrix rpre = (model.w1() * d.x).colwise() + model.b1();
    const Matrix rhidden = rpre.cwiseMax(Scalar(0));
    const LogitMatrix<Scalar> rz = (model.w2() * rhidden).colwise() + model.b2();
    const LogitMatrix<Scalar> diff = rz - d.target;
    loss += d.alpha * diff.squaredNorm() / count;
    if (grad) {
      const LogitMatrix<Scalar> rdz = (Scalar(2) * d.alpha / count) * diff;
      detail::backprop(model, d.x, rpre, rhidden, rdz, *grad);
    }
  }
  return loss;
}

template <typename Scalar>
struct AdamState {
  ParamVector<Scalar> m;
  ParamVector<Scalar> v;
  std::uint64_t step = 0;

  static AdamState zeros() {
    return {ParamVector<Scalar>::Zero(Mlp<Scalar>::kParamCount), ParamVector<Scalar>::Zero(Mlp<Scalar>::kParamCount), 0};
  }
};

template <typename Scalar>
struct AdamConfig {
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

// Bias-corrected Adam. Throws Error("numeric") on a non-finite gradient or
// parameter.
template <typename Scalar>
void adam_step(Mlp<Scalar>& model, AdamState<Scalar>& state, const ParamVector<Scalar>& grad,
               const AdamConfig<Scalar>& config) {
  if (!grad.allFinite()) throw Error("numeric", "non-finite gradient");
  ++state.step;
  state.m = config.beta1 * state.m + (Scalar(1) - config.beta1) * grad;
  state.v = config.beta2 * state.v + (Scalar(1) - config.beta2) * grad.cwiseProduct(grad);
  const Scalar c1 = Scalar(1) - std::pow(config.beta1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(config.beta2, static_cast<Scalar>(state.step));
  model.params().array() -=
      config.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.epsilon);
  if (!model.params().allFinite()) throw Error("numeric", "non-finite parameter after Adam step");
}

}  // namespace concon
