#include "tfusion/tape.hpp"

#include <cmath>

#include "tfusion/errors.hpp"
#include "tfusion/ops.hpp"

namespace tfusion {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw UsageError("value of an unbound Var");
  return tape_->value(*this);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<Var> parents, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.parents.reserve(parents.size());
  for (Var p : parents) {
    check_owned(p, "operand");
    node.parents.push_back(p.index_);
    node.needs_grad = node.needs_grad || nodes_[p.index_].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.index_].value;
}

void Tape::check_owned(Var v, const char* what) const {
  if (v.tape_ != this || v.index_ >= nodes_.size()) {
    throw UsageError(std::string(what) + ": variable is not registered on this tape");
  }
}

std::vector<Matrix> Tape::gradient(Var loss, std::span<const Var> wrt) {
  check_owned(loss, "gradient loss");
  for (Var w : wrt) {
    check_owned(w, "gradient parameter");
    if (!nodes_[w.index_].is_variable) {
      throw UsageError("gradient parameter was not created with Tape::variable");
    }
  }
  const Matrix& lv = nodes_[loss.index_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("gradient: loss must be 1x1, got " + lv.shape_string());
  }

  adjoints_.assign(nodes_.size(), Matrix());
  adjoints_[loss.index_] = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || !node.backward || adjoints_[i].empty()) continue;
    const Matrix g = std::move(adjoints_[i]);
    node.backward(*this, g);
    adjoints_[i] = g;
  }

  std::vector<Matrix> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    const Matrix& g = adjoints_[w.index_];
    out.push_back(g.empty() ? Matrix(nodes_[w.index_].value.rows(), nodes_[w.index_].value.cols())
                            : g);
  }
  adjoints_.clear();
  return out;
}

void Tape::accumulate(Var parent, const Matrix& contribution) {
  Node& node = nodes_[parent.index_];
  if (!node.needs_grad) return;
  if (!contribution.same_shape(node.value)) {
    throw ShapeError("accumulate: adjoint " + contribution.shape_string() + " for value " +
                     node.value.shape_string());
  }
  Matrix& adj = adjoints_[parent.index_];
  if (adj.empty()) {
    adj = contribution;
  } else {
    auto ad = adj.data();
    auto cd = contribution.data();
    for (std::size_t k = 0; k < ad.size(); ++k) ad[k] += cd[k];
  }
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw UsageError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw UsageError("operands live on different tapes");
  return tape_of(a);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, matmul(g, transpose(b.value())));
    if (tp.needs_grad(b)) tp.accumulate(b, matmul(transpose(a.value()), g));
  });
}

Var transpose(Var a) {
  return tape_of(a).record(transpose(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, transpose(g));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(add(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(sub(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.needs_grad(b)) tp.accumulate(b, scale(g, -1.0));
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(hadamard(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, hadamard(g, b.value()));
    if (tp.needs_grad(b)) tp.accumulate(b, hadamard(g, a.value()));
  });
}

Var divide(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(divide(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    const Matrix& bv = b.value();
    if (tp.needs_grad(a)) tp.accumulate(a, divide(g, bv));
    if (tp.needs_grad(b)) {
      Matrix gb = g;
      const Matrix& av = a.value();
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] = -g[k] * av[k] / (bv[k] * bv[k]);
      tp.accumulate(b, gb);
    }
  });
}

Var scale(Var a, double c) {
  return tape_of(a).record(scale(a.value(), c), {a}, [a, c](Tape& tp, const Matrix& g) {
    tp.accumulate(a, scale(g, c));
  });
}

Var add_scalar(Var a, double c) {
  return tape_of(a).record(add_scalar(a.value(), c), {a},
                           [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var add_row_broadcast(Var a, Var row) {
  Tape& t = tape_of(a, row);
  return t.record(add_row_broadcast(a.value(), row.value()), {a, row},
                  [a, row](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, g);
                    if (tp.needs_grad(row)) tp.accumulate(row, column_sums(g));
                  });
}

Var relu(Var a) {
  return tape_of(a).record(relu(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    const Matrix& av = a.value();
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] = av[k] > 0.0 ? g[k] : 0.0;
    tp.accumulate(a, ga);
  });
}

Var square(Var a) {
  return tape_of(a).record(square(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    const Matrix& av = a.value();
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] = 2.0 * av[k] * g[k];
    tp.accumulate(a, ga);
  });
}

Var log(Var a) {
  return tape_of(a).record(log(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, divide(g, a.value()));
  });
}

Var exp(Var a) {
  Matrix y = exp(a.value());
  return tape_of(a).record(y, {a}, [a, y](Tape& tp, const Matrix& g) {
    tp.accumulate(a, hadamard(g, y));
  });
}

Var gelu(Var a) {
  return tape_of(a).record(gelu(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    const Matrix& av = a.value();
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] = g[k] * gelu_derivative(av[k]);
    tp.accumulate(a, ga);
  });
}

Var zero_diagonal(Var a) {
  return tape_of(a).record(zero_diagonal(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, zero_diagonal(g));
  });
}

Var row_sums(Var a) {
  return tape_of(a).record(row_sums(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g(i, 0);
    tp.accumulate(a, ga);
  });
}

Var sum(Var a) {
  return tape_of(a).record(Matrix(1, 1, sum(a.value())), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_normalize(Var a) {
  Tape& t = tape_of(a);
  Matrix y = row_normalize(a.value());
  return t.record(y, {a}, [a, y](Tape& tp, const Matrix& g) {
    const Matrix& av = a.value();
    Matrix ga(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
      double s = 0.0;
      double gy = 0.0;
      for (std::size_t j = 0; j < av.cols(); ++j) {
        s += av(i, j);
        gy += g(i, j) * y(i, j);
      }
      for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) = (g(i, j) - gy) / s;
    }
    tp.accumulate(a, ga);
  });
}

Var row_l2_normalize(Var a) {
  Tape& t = tape_of(a);
  Matrix y = row_l2_normalize(a.value());
  return t.record(y, {a}, [a, y](Tape& tp, const Matrix& g) {
    const Matrix& av = a.value();
    Matrix ga(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
      const double r = norm(av.row(i));
      const double gy = dot(g.row(i), y.row(i));
      for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) = (g(i, j) - y(i, j) * gy) / r;
    }
    tp.accumulate(a, ga);
  });
}

Var row_softmax(Var a, bool mask_diagonal) {
  Tape& t = tape_of(a);
  Matrix y = row_softmax(a.value(), mask_diagonal);
  return t.record(y, {a}, [a, y](Tape& tp, const Matrix& g) {
    Matrix ga(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double gy = dot(g.row(i), y.row(i));
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - gy);
    }
    tp.accumulate(a, ga);
  });
}

Var row_log_softmax(Var a, bool mask_diagonal) {
  Tape& t = tape_of(a);
  Matrix y = row_log_softmax(a.value(), mask_diagonal);
  return t.record(y, {a}, [a, mask_diagonal](Tape& tp, const Matrix& g) {
    const Matrix p = row_softmax(a.value(), mask_diagonal);
    Matrix ga(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) {
        if (mask_diagonal && i == j) continue;
        gs += g(i, j);
      }
      for (std::size_t j = 0; j < p.cols(); ++j) {
        ga(i, j) = (mask_diagonal && i == j) ? 0.0 : g(i, j) - p(i, j) * gs;
      }
    }
    tp.accumulate(a, ga);
  });
}

Var hconcat(std::span<const Var> blocks) {
  if (blocks.empty()) throw ShapeError("hconcat: no blocks");
  Tape& t = tape_of(blocks.front());
  std::vector<Matrix> values;
  std::vector<Var> parents(blocks.begin(), blocks.end());
  for (Var b : blocks) {
    if (b.tape() != &t) throw UsageError("operands live on different tapes");
    values.push_back(b.value());
  }
  return t.record(hconcat(values), parents, [parents](Tape& tp, const Matrix& g) {
    std::size_t offset = 0;
    for (Var b : parents) {
      Matrix gb(b.rows(), b.cols());
      for (std::size_t i = 0; i < gb.rows(); ++i)
        for (std::size_t j = 0; j < gb.cols(); ++j) gb(i, j) = g(i, offset + j);
      offset += b.cols();
      tp.accumulate(b, gb);
    }
  });
}

Var layer_norm(Var x, Var scale_row, Var shift_row, double eps) {
  Tape& t = tape_of(x, scale_row);
  if (shift_row.tape() != &t) throw UsageError("operands live on different tapes");
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t m = xv.cols();
  if (scale_row.rows() != 1 || scale_row.cols() != m || shift_row.rows() != 1 ||
      shift_row.cols() != m) {
    throw ShapeError("layer_norm: scale/shift must be 1x" + std::to_string(m));
  }
  Matrix xhat(n, m);
  Matrix inv_std(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (double v : xv.row(i)) mu += v;
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (double v : xv.row(i)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(m);
    inv_std(i, 0) = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) xhat(i, j) = (xv(i, j) - mu) * inv_std(i, 0);
  }
  Matrix out(n, m);
  const Matrix& sv = scale_row.value();
  const Matrix& bv = shift_row.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = sv(0, j) * xhat(i, j) + bv(0, j);

  return t.record(out, {x, scale_row, shift_row},
                  [x, scale_row, shift_row, xhat, inv_std](Tape& tp, const Matrix& g) {
                    const std::size_t rows = xhat.rows();
                    const std::size_t cols = xhat.cols();
                    const Matrix& sv = scale_row.value();
                    if (tp.needs_grad(scale_row)) tp.accumulate(scale_row, column_sums(hadamard(g, xhat)));
                    if (tp.needs_grad(shift_row)) tp.accumulate(shift_row, column_sums(g));
                    if (!tp.needs_grad(x)) return;
                    Matrix gx(rows, cols);
                    for (std::size_t i = 0; i < rows; ++i) {
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (std::size_t j = 0; j < cols; ++j) {
                        const double d = g(i, j) * sv(0, j);
                        mean_d += d;
                        mean_dx += d * xhat(i, j);
                      }
                      mean_d /= static_cast<double>(cols);
                      mean_dx /= static_cast<double>(cols);
                      for (std::size_t j = 0; j < cols; ++j) {
                        const double d = g(i, j) * sv(0, j);
                        gx(i, j) = inv_std(i, 0) * (d - mean_d - xhat(i, j) * mean_dx);
                      }
                    }
                    tp.accumulate(x, gx);
                  });
}

}  // namespace tfusion
