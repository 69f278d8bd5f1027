#pragma once

#include <cstddef>
#include <vector>

#include "tfusion/matrix.hpp"
#include "tfusion/tape.hpp"

namespace tfusion::heads {

/// Which formulation of the ReLU attention block to run.
enum class AttentionMode {
  // X <- rownorm(X); A = (X Wq)(X Wk)^T; X' = ReLU(A)(X Wv) + X.
  kEquation,
  // As above, but queries and keys are L2-normalized, the diagonal of ReLU(A)
  // is zeroed and rows are normalized with a 1e-10 floor before the values
  // are mixed.
  kCodeListing,
};

/// ReLU-attention block. Query and key weights are m x p (p = m for learned
/// blocks; constructed blocks may use p = n). Value weights are m x m.
struct TransFusionBlock {
  Matrix w_query;
  Matrix w_key;
  Matrix w_value;
  AttentionMode mode = AttentionMode::kCodeListing;
  bool residual = true;

  std::vector<Matrix*> parameters() { return {&w_query, &w_key, &w_value}; }
  std::vector<const Matrix*> parameters() const { return {&w_query, &w_key, &w_value}; }
};

/// Pre-norm softmax Transformer block with `heads` heads of width head_dim.
struct MultiHeadBlock {
  std::size_t heads = 1;
  std::size_t head_dim = 0;
  std::vector<Matrix> w_query;  // heads x (m x head_dim)
  std::vector<Matrix> w_key;
  std::vector<Matrix> w_value;
  Matrix w_out;                 // (heads * head_dim) x m
  Matrix ffn_w1, ffn_b1;        // m x f, 1 x f
  Matrix ffn_w2, ffn_b2;        // f x m, 1 x m
  Matrix ln1_scale, ln1_shift;  // 1 x m
  Matrix ln2_scale, ln2_shift;  // 1 x m

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

/// Affine layer y = x W + b.
struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out

  std::vector<Matrix*> parameters() { return {&weight, &bias}; }
  std::vector<const Matrix*> parameters() const { return {&weight, &bias}; }
};

// Tape-level block evaluation. `params` holds the block's parameters as tape
// variables (or constants) in the order returned by parameters().

struct TransFusionOutput {
  Var next;
  Var attention;  // pre-activation A (equation) or normalized weights (code listing)
};

TransFusionOutput transfusion_forward(const TransFusionBlock& block, std::span<const Var> params,
                                      Var x);

struct MultiHeadOutput {
  Var next;
  std::vector<Var> attention;  // row-stochastic, one per head
};

MultiHeadOutput multihead_forward(const MultiHeadBlock& block, std::span<const Var> params,
                                  Var x);

Var dense_forward(std::span<const Var> params, Var x);

// Convenience wrappers that evaluate on a throwaway tape.

struct TransFusionResult {
  Matrix next;
  Matrix attention;
};
TransFusionResult transfusion_forward(const TransFusionBlock& block, const Matrix& x);

struct MultiHeadResult {
  Matrix next;
  std::vector<Matrix> attention;
};
MultiHeadResult multihead_forward(const MultiHeadBlock& block, const Matrix& x);

/// Binds each parameter matrix onto `tape` as a variable (trainable) or constant.
std::vector<Var> bind_parameters(Tape& tape, const std::vector<const Matrix*>& params, bool trainable);

}  // namespace tfusion::heads
