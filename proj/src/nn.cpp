#include "suci/nn.hpp"

#include <stdexcept>

namespace suci::nn {

LossAndGrad cross_entropy(const MatrixXd& logits, const std::vector<std::size_t>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  }
  LossAndGrad out;
  out.grad = softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(labels.size());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
    if (y >= logits.cols()) throw std::invalid_argument("cross_entropy: label out of range");
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.loss += (lse - logits(r, y)) * inv_n;
    out.grad(r, y) -= 1.0;
  }
  out.grad *= inv_n;
  return out;
}

void Adam::step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam: params/grads length mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(VectorXd::Zero(p.size()));
      v_.push_back(VectorXd::Zero(p.size()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || params[i].size() != m_[i].size()) {
      throw std::invalid_argument("Adam: shape mismatch for " + params[i].name);
    }
    Eigen::Map<VectorXd> p(params[i].data, params[i].size());
    Eigen::Map<const VectorXd> g(grads[i].data, grads[i].size());
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseAbs2();
    p.array() -= options_.learning_rate * (m_[i].array() / c1) /
                 ((v_[i].array() / c2).sqrt() + options_.epsilon);
  }
}

}  // namespace suci::nn
