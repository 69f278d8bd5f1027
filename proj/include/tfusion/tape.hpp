#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation applied to its variables in execution
// order, which is a topological order by construction. `gradient` sweeps the
// recorded nodes once in reverse.
//
//   Tape tape;
//   Var w = tape.variable(weights);
//   Var loss = sum(square(matmul(tape.constant(x), w)));
//   std::vector<Matrix> g = tape.gradient(loss, {w});

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tfusion/matrix.hpp"

namespace tfusion {

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  // Receives the output adjoint and accumulates into the parents through
  // Tape::accumulate.
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is never requested.
  Var constant(Matrix value);
  /// Leaf that may be passed to `gradient`.
  Var variable(Matrix value);

  /// Records an operation. `parents` must already be on this tape.
  Var record(Matrix value, std::vector<Var> parents, Backward backward);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Exact gradients of the 1x1 `loss` with respect to each of `wrt`.
  /// Variables that `loss` does not depend on receive zero matrices.
  std::vector<Matrix> gradient(Var loss, std::span<const Var> wrt);
  std::vector<Matrix> gradient(Var loss, std::initializer_list<Var> wrt) {
    return gradient(loss, std::span<const Var>(wrt.begin(), wrt.size()));
  }

  /// Only valid inside a Backward callback.
  void accumulate(Var parent, const Matrix& contribution);
  /// Whether the gradient sweep needs the adjoint of `v`.
  bool needs_grad(Var v) const { return nodes_[v.index_].needs_grad; }

 private:
  struct Node {
    Matrix value;
    std::vector<std::size_t> parents;
    Backward backward;
    bool needs_grad = false;
    bool is_variable = false;
  };

  void check_owned(Var v, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
};

// Differentiable operations. Every operand must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var divide(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var add_row_broadcast(Var a, Var row);
Var relu(Var a);
Var square(Var a);
Var log(Var a);
Var exp(Var a);
Var gelu(Var a);
Var zero_diagonal(Var a);
Var row_sums(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_normalize(Var a);
Var row_l2_normalize(Var a);
Var row_softmax(Var a, bool mask_diagonal = false);
Var row_log_softmax(Var a, bool mask_diagonal = false);
Var hconcat(std::span<const Var> blocks);
/// Per-row layer normalization followed by elementwise affine scale/shift (1 x cols).
Var layer_norm(Var x, Var scale, Var shift, double eps = 1e-5);

}  // namespace tfusion
