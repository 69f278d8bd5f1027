#include "tfusion/losses/losses.hpp"

#include <cmath>

#include "tfusion/errors.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::losses {

namespace {

void require_square(const Matrix& m, std::size_t n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(n) + "x" +
                     std::to_string(n) + ", got " + m.shape_string());
  }
}

void require_positive_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
}

// sum_ij q_ij log q_ij with 0 log 0 = 0.
double neg_entropy(const Matrix& q) {
  double s = 0.0;
  for (double v : q.data())
    if (v > 0.0) s += v * std::log(v);
  return s;
}

Matrix target_distribution(const TargetAffinity& target) {
  return target.row_normalized ? target.y : row_normalize(target.y);
}

}  // namespace

Var cosine_affinity(Var z) {
  const Var zn = row_l2_normalize(z);
  return matmul(zn, transpose(zn));
}

Matrix cosine_affinity(const Matrix& z) {
  const Matrix zn = row_l2_normalize(z);
  return matmul(zn, transpose(zn));
}

Var nt_xent(Var z, const Matrix& positives, double tau) {
  require_positive_tau(tau);
  const std::size_t n = z.rows();
  if (n < 2) throw ConfigError("nt_xent: need at least 2 embeddings");
  require_square(positives, n, "nt_xent positives");
  Matrix mask(n, n);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && positives(i, j) != 0.0) {
        mask(i, j) = 1.0;
        ++pairs;
      }
  if (pairs == 0) throw DegenerateError("nt_xent: no positive pairs");

  Tape& tape = *z.tape();
  const Var logits = scale(cosine_affinity(z), 1.0 / tau);
  const Var log_prob = row_log_softmax(logits, true);
  return scale(sum(hadamard(log_prob, tape.constant(mask))), -1.0 / static_cast<double>(pairs));
}

double nt_xent(const Matrix& z, const Matrix& positives, double tau) {
  Tape tape;
  return nt_xent(tape.constant(z), positives, tau).value()(0, 0);
}

Var g_normalize(Var a) {
  if (a.rows() != a.cols()) throw ShapeError("g_normalize: affinity must be square");
  if (a.rows() < 2) throw ConfigError("g_normalize: need n >= 2");
  return row_normalize(add_scalar(zero_diagonal(square(a)), kLogFloor));
}

Matrix g_normalize(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("g_normalize: affinity must be square");
  if (a.rows() < 2) throw ConfigError("g_normalize: need n >= 2");
  return row_normalize(add_scalar(zero_diagonal(square(a)), kLogFloor));
}

double jsd_divergence(const Matrix& p, const Matrix& q, Mixture mixture) {
  if (!p.same_shape(q)) {
    throw ShapeError("jsd_divergence: " + p.shape_string() + " vs " + q.shape_string());
  }
  const double w = mixture == Mixture::kHalf ? 0.5 : 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double pv = p(i, j);
      const double qv = q(i, j);
      const double lm = std::log(w * (pv + qv) + kLogFloor);
      row += qv * (std::log(qv + kLogFloor) - lm) + pv * (std::log(pv + kLogFloor) - lm);
    }
    total += row;
  }
  return total / static_cast<double>(p.rows());
}

Var jsd_divergence(Var p, const Matrix& q, Mixture mixture) {
  if (!p.value().same_shape(q)) {
    throw ShapeError("jsd_divergence: " + p.value().shape_string() + " vs " + q.shape_string());
  }
  Tape& tape = *p.tape();
  const Var qc = tape.constant(q);
  Var mix = add(p, qc);
  if (mixture == Mixture::kHalf) mix = scale(mix, 0.5);
  const Var log_mix = log(add_scalar(mix, kLogFloor));
  const Var q_term = tape.constant(Matrix(1, 1, sum(hadamard(q, log(add_scalar(q, kLogFloor))))));
  const Var p_term = sum(hadamard(p, log(add_scalar(p, kLogFloor))));
  const Var cross = sum(hadamard(add(p, qc), log_mix));
  return scale(sub(add(q_term, p_term), cross), 1.0 / static_cast<double>(q.rows()));
}

Var jsd_loss(Var a, const TargetAffinity& target, Mixture mixture) {
  require_square(target.y, a.rows(), "jsd_loss target");
  return jsd_divergence(g_normalize(a), target_distribution(target), mixture);
}

double jsd_loss(const Matrix& a, const TargetAffinity& target, Mixture mixture) {
  require_square(target.y, a.rows(), "jsd_loss target");
  return jsd_divergence(g_normalize(a), target_distribution(target), mixture);
}

Var kl_softmax_loss(Var a, const TargetAffinity& target, double tau) {
  require_positive_tau(tau);
  const std::size_t n = a.rows();
  require_square(target.y, n, "kl_softmax_loss target");
  const Matrix q = target_distribution(target);
  Tape& tape = *a.tape();
  const Var log_p = row_log_softmax(scale(a, 1.0 / tau), true);
  const Var cross = sum(hadamard(log_p, tape.constant(q)));
  const Var entropy = tape.constant(Matrix(1, 1, neg_entropy(q)));
  return scale(sub(entropy, cross), 1.0 / static_cast<double>(n));
}

double kl_softmax_loss(const Matrix& a, const TargetAffinity& target, double tau) {
  Tape tape;
  return kl_softmax_loss(tape.constant(a), target, tau).value()(0, 0);
}

}  // namespace tfusion::losses
