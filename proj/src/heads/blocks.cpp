#include "tfusion/heads/blocks.hpp"

#include <cmath>

#include "tfusion/errors.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::heads {

std::vector<Matrix*> MultiHeadBlock::parameters() {
  std::vector<Matrix*> out;
  for (auto& w : w_query) out.push_back(&w);
  for (auto& w : w_key) out.push_back(&w);
  for (auto& w : w_value) out.push_back(&w);
  for (Matrix* p : {&w_out, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2, &ln1_scale, &ln1_shift, &ln2_scale,
                    &ln2_shift})
    out.push_back(p);
  return out;
}

std::vector<const Matrix*> MultiHeadBlock::parameters() const {
  std::vector<const Matrix*> out;
  for (auto* p : const_cast<MultiHeadBlock*>(this)->parameters()) out.push_back(p);
  return out;
}

std::vector<Var> bind_parameters(Tape& tape, const std::vector<const Matrix*>& params, bool trainable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Matrix* p : params) out.push_back(trainable ? tape.variable(*p) : tape.constant(*p));
  return out;
}

TransFusionOutput transfusion_forward(const TransFusionBlock& block, std::span<const Var> params,
                                      Var x) {
  if (params.size() != 3) throw UsageError("transfusion_forward: expected 3 parameters");
  const Var wq = params[0], wk = params[1], wv = params[2];
  if (wq.rows() != x.cols() || wk.rows() != x.cols() || wq.cols() != wk.cols()) {
    throw ShapeError("transfusion_forward: query/key weights " + wq.value().shape_string() + ", " +
                     wk.value().shape_string() + " for input " + x.value().shape_string());
  }
  if (wv.rows() != x.cols() || wv.cols() != x.cols()) {
    throw ShapeError("transfusion_forward: value weights must be m x m, got " +
                     wv.value().shape_string());
  }

  const Var xn = row_l2_normalize(x);
  Var q = matmul(xn, wq);
  Var k = matmul(xn, wk);
  const Var v = matmul(xn, wv);
  TransFusionOutput out;
  if (block.mode == AttentionMode::kEquation) {
    out.attention = matmul(q, transpose(k));
    out.next = matmul(relu(out.attention), v);
  } else {
    if (x.rows() < 2) {
      throw DegenerateError("transfusion_forward: code-listing mode needs at least 2 samples");
    }
    q = row_l2_normalize(q);
    k = row_l2_normalize(k);
    const Var a = zero_diagonal(relu(matmul(q, transpose(k))));
    out.attention = row_normalize(add_scalar(a, kLogFloor));
    out.next = matmul(out.attention, v);
  }
  if (block.residual) out.next = add(out.next, xn);
  return out;
}

MultiHeadOutput multihead_forward(const MultiHeadBlock& block, std::span<const Var> params,
                                  Var x) {
  const std::size_t h = block.heads;
  if (params.size() != 3 * h + 9) throw UsageError("multihead_forward: parameter count mismatch");
  const std::size_t m = x.cols();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(block.head_dim));

  const Var& w_out = params[3 * h];
  if (w_out.rows() != h * block.head_dim || w_out.cols() != m) {
    throw ShapeError("multihead_forward: output projection " + w_out.value().shape_string() +
                     " does not match " + std::to_string(h) + " heads of width " +
                     std::to_string(block.head_dim));
  }
  const Var ffn_w1 = params[3 * h + 1], ffn_b1 = params[3 * h + 2];
  const Var ffn_w2 = params[3 * h + 3], ffn_b2 = params[3 * h + 4];
  const Var ln1_s = params[3 * h + 5], ln1_b = params[3 * h + 6];
  const Var ln2_s = params[3 * h + 7], ln2_b = params[3 * h + 8];

  MultiHeadOutput out;
  const Var normed = layer_norm(x, ln1_s, ln1_b);
  std::vector<Var> head_outputs;
  for (std::size_t i = 0; i < h; ++i) {
    const Var q = matmul(normed, params[i]);
    const Var k = matmul(normed, params[h + i]);
    const Var v = matmul(normed, params[2 * h + i]);
    const Var weights = row_softmax(scale(matmul(q, transpose(k)), inv_sqrt_dk));
    out.attention.push_back(weights);
    head_outputs.push_back(matmul(weights, v));
  }
  const Var attended = matmul(hconcat(head_outputs), w_out);
  const Var x1 = add(x, attended);
  const Var hidden = gelu(add_row_broadcast(matmul(layer_norm(x1, ln2_s, ln2_b), ffn_w1), ffn_b1));
  out.next = add(x1, add_row_broadcast(matmul(hidden, ffn_w2), ffn_b2));
  return out;
}

Var dense_forward(std::span<const Var> params, Var x) {
  if (params.size() != 2) throw UsageError("dense_forward: expected weight and bias");
  return add_row_broadcast(matmul(x, params[0]), params[1]);
}

TransFusionResult transfusion_forward(const TransFusionBlock& block, const Matrix& x) {
  Tape tape;
  const std::vector<Var> params = bind_parameters(tape, block.parameters(), false);
  const TransFusionOutput out = transfusion_forward(block, params, tape.constant(x));
  return {out.next.value(), out.attention.value()};
}

MultiHeadResult multihead_forward(const MultiHeadBlock& block, const Matrix& x) {
  Tape tape;
  const std::vector<Var> params = bind_parameters(tape, block.parameters(), false);
  const MultiHeadOutput out = multihead_forward(block, params, tape.constant(x));
  MultiHeadResult r{out.next.value(), {}};
  for (Var a : out.attention) r.attention.push_back(a.value());
  return r;
}

}  // namespace tfusion::heads
