#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tfusion/heads/blocks.hpp"
#include "tfusion/rng.hpp"

namespace tfusion::pipeline {

/// Backbone: x -> GeLU(x W1 + b1) W2 + b2, rows scaled to unit length.
struct Encoder {
  heads::DenseLayer first;
  heads::DenseLayer second;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

/// widths = {input, hidden, output}; uniform +-sqrt(1/fan_in) initialization.
Encoder init_encoder(std::span<const std::size_t> widths, Rng& rng);

/// `params` are the encoder's parameters bound on the tape of `x`.
Var encode(std::span<const Var> params, Var x);
Matrix encode(const Encoder& encoder, const Matrix& x);

}  // namespace tfusion::pipeline
