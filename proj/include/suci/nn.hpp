#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace suci::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Named, mutable view of one parameter tensor (column-major storage).
struct TensorView {
  std::string name;
  double* data;
  Eigen::Index rows, cols;

  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<MatrixXd> map() const { return {data, rows, cols}; }
};

inline TensorView view(std::string name, MatrixXd& m) { return {std::move(name), m.data(), m.rows(), m.cols()}; }
inline TensorView view(std::string name, VectorXd& v) { return {std::move(name), v.data(), v.size(), 1}; }

// y = W x + b, applied row-wise to a batch: Y = X W^T + 1 b^T.
struct Affine {
  MatrixXd weight;  // out x in
  VectorXd bias;    // out

  Affine() = default;
  Affine(Eigen::Index in, Eigen::Index out) : weight(MatrixXd::Zero(out, in)), bias(VectorXd::Zero(out)) {}

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }

  MatrixXd forward(const MatrixXd& x) const {
    MatrixXd y = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
  }

  // Accumulates parameter gradients into `grad`; returns dL/dX.
  MatrixXd backward(const MatrixXd& x, const MatrixXd& dy, Affine& grad) const {
    grad.weight.noalias() += dy.transpose() * x;
    grad.bias += dy.colwise().sum().transpose();
    return dy * weight;
  }

  void append_views(const std::string& prefix, std::vector<TensorView>& out) {
    out.push_back(view(prefix + ".weight", weight));
    out.push_back(view(prefix + ".bias", bias));
  }

  Affine zeros_like() const { return Affine(in(), out()); }

  bool operator==(const Affine&) const = default;
};

// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
template <typename Rng>
void init_uniform(Affine& layer, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in()));
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-bound, bound);
}

template <typename Rng>
void init_uniform(MatrixXd& weight, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight.cols()));
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = rng.uniform(-bound, bound);
}

// Exact (erf) GeLU.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline MatrixXd gelu(const MatrixXd& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

inline MatrixXd gelu_backward(const MatrixXd& pre, const MatrixXd& dy) {
  return dy.cwiseProduct(pre.unaryExpr([](double v) { return gelu_grad(v); }));
}

// Numerically stable softmax of each row.
inline MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline VectorXd softmax(const VectorXd& v) {
  VectorXd e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// Given probabilities P = softmax(S) row-wise and dL/dP, returns dL/dS.
inline MatrixXd softmax_rows_backward(const MatrixXd& probs, const MatrixXd& dprobs) {
  const VectorXd inner = probs.cwiseProduct(dprobs).rowwise().sum();
  MatrixXd ds = dprobs;
  ds.colwise() -= inner;
  return probs.cwiseProduct(ds);
}

struct LossAndGrad {
  double loss = 0.0;
  MatrixXd grad;  // dL/dlogits
};

// Mean cross-entropy over the batch of softmax(logits) against labels.
LossAndGrad cross_entropy(const MatrixXd& logits, const std::vector<std::size_t>& labels);

// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  explicit Adam(Options options) : options_(options) {}

  // Applies one step. params and grads must list tensors in the same order
  // with the same shapes on every call.
  void step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads);

  std::uint64_t steps() const { return t_; }

 private:
  Options options_;
  std::uint64_t t_ = 0;
  std::vector<VectorXd> m_, v_;
};

}  // namespace suci::nn
