#include "tfusion/pipeline/encoder.hpp"

#include <cmath>

#include "tfusion/errors.hpp"

namespace tfusion::pipeline {

std::vector<Matrix*> Encoder::parameters() {
  return {&first.weight, &first.bias, &second.weight, &second.bias};
}

std::vector<const Matrix*> Encoder::parameters() const {
  return {&first.weight, &first.bias, &second.weight, &second.bias};
}

Encoder init_encoder(std::span<const std::size_t> widths, Rng& rng) {
  if (widths.size() != 3) throw ConfigError("encoder: expected 3 widths");
  Encoder e;
  auto layer = [&rng](std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw ConfigError("encoder: zero width");
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    heads::DenseLayer d;
    d.weight = rng.uniform_matrix(in, out, -bound, bound);
    d.bias = rng.uniform_matrix(1, out, -bound, bound);
    return d;
  };
  e.first = layer(widths[0], widths[1]);
  e.second = layer(widths[1], widths[2]);
  return e;
}

Var encode(std::span<const Var> params, Var x) {
  if (params.size() != 4) throw UsageError("encode: expected 4 parameters");
  const Var hidden = gelu(heads::dense_forward(params.subspan(0, 2), x));
  return row_l2_normalize(heads::dense_forward(params.subspan(2, 2), hidden));
}

Matrix encode(const Encoder& encoder, const Matrix& x) {
  Tape tape;
  const std::vector<Var> params = heads::bind_parameters(tape, encoder.parameters(), false);
  return encode(params, tape.constant(x)).value();
}

}  // namespace tfusion::pipeline
