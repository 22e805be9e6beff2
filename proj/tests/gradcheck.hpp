#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "suci/nn.hpp"

namespace suci::gradcheck {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;

struct GradMismatch {
  std::string name;
  double rel_error;
};

// Central differences of loss() against analytic gradients, per tensor:
// ||a - n|| / max(||a||, ||n||, 1e-8). Returns the worst tensor.
inline GradMismatch worst_gradient_error(const std::vector<nn::TensorView>& params,
                                         const std::vector<nn::TensorView>& analytic,
                                         const std::function<double()>& loss) {
  GradMismatch worst{"", 0.0};
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    nn::VectorXd numeric(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + kFdStep;
      const double up = loss();
      p.data[i] = saved - kFdStep;
      const double down = loss();
      p.data[i] = saved;
      numeric[i] = (up - down) / (2.0 * kFdStep);
    }
    const Eigen::Map<const nn::VectorXd> a(analytic[t].data, analytic[t].size());
    const double denom = std::max({a.norm(), numeric.norm(), 1e-8});
    const double rel = (a - numeric).norm() / denom;
    if (rel >= worst.rel_error) worst = {p.name, rel};
  }
  return worst;
}

}  // namespace suci::gradcheck
