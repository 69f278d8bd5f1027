#pragma once

#include <cstddef>
#include <vector>

#include "tfusion/matrix.hpp"

namespace tfusion::pipeline {

/// eta(t) = eta_min + (eta0 - eta_min)(1 + cos(pi t / T)) / 2, with eta(0) = eta0
/// and eta(T) = eta_min exactly. t is clamped to [0, T].
double cosine_learning_rate(std::size_t t, std::size_t total, double eta0, double eta_min);

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- mu v + g + lambda w;  w <- w - eta v
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
            double learning_rate);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Matrix> velocity_;
};

}  // namespace tfusion::pipeline
