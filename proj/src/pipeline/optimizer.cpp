#include "tfusion/pipeline/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "tfusion/errors.hpp"

namespace tfusion::pipeline {

double cosine_learning_rate(std::size_t t, std::size_t total, double eta0, double eta_min) {
  if (total == 0 || t == 0) return eta0;
  if (t >= total) return eta_min;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return eta_min + (eta0 - eta_min) * (1.0 + std::cos(phase)) / 2.0;
}

void Sgd::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
               double learning_rate) {
  if (params.size() != grads.size()) throw UsageError("Sgd: parameter/gradient count mismatch");
  if (velocity_.empty()) {
    for (const Matrix* p : params) velocity_.emplace_back(p->rows(), p->cols());
  }
  if (velocity_.size() != params.size()) throw UsageError("Sgd: parameter set changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& w = *params[k];
    Matrix& v = velocity_[k];
    const Matrix& g = grads[k];
    if (!w.same_shape(g) || !w.same_shape(v)) {
      throw ShapeError("Sgd: shape mismatch for parameter " + std::to_string(k));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i] + weight_decay_ * w[i];
      w[i] -= learning_rate * v[i];
    }
  }
}

}  // namespace tfusion::pipeline
