#include "tfusion/pipeline/gradcheck.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <variant>

#include "tfusion/errors.hpp"
#include "tfusion/finite_diff.hpp"
#include "tfusion/heads/head.hpp"
#include "tfusion/losses/losses.hpp"
#include "tfusion/ops.hpp"
#include "tfusion/pipeline/encoder.hpp"

namespace tfusion::pipeline {

namespace {

// Builds a scalar from the operands, all bound on `tape`.
using Program = std::function<Var(Tape& tape, std::span<const Var> operands)>;

double check(const Program& program, const std::vector<Matrix>& operands) {
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : operands) vars.push_back(tape.variable(m));
  const std::vector<Matrix> grads = tape.gradient(program(tape, vars), vars);

  double worst = 0.0;
  for (std::size_t k = 0; k < operands.size(); ++k) {
    const ScalarFn f = [&](const Matrix& at) {
      Tape t;
      std::vector<Var> vs;
      for (std::size_t i = 0; i < operands.size(); ++i) vs.push_back(t.constant(i == k ? at : operands[i]));
      return program(t, vs).value()(0, 0);
    };
    worst = std::max(worst, relative_error(grads[k], finite_diff(f, operands[k])));
  }
  return worst;
}

// Random linear functional of a matrix-valued output, so every entry matters.
Var probe_sum(Tape& tape, Var out, const Matrix& weights) {
  return sum(hadamard(out, tape.constant(weights)));
}

std::vector<Matrix> head_operands(const heads::ProjectionHead& head, const Matrix& x) {
  std::vector<Matrix> ops;
  for (const Matrix* p : head.parameters()) ops.push_back(*p);
  ops.push_back(x);
  return ops;
}

// Smallest |pre-activation| entering a ReLU across the TransFusion blocks of
// `head`. Central differences straddling a ReLU kink are meaningless, so draws
// closer than a small margin are replaced.
double relu_margin(const heads::ProjectionHead& head, const Matrix& x) {
  double margin = std::numeric_limits<double>::infinity();
  Matrix current = x;
  for (const heads::Block& block : head.blocks) {
    const auto* b = std::get_if<heads::TransFusionBlock>(&block);
    if (b == nullptr) return margin;
    const Matrix xn = row_l2_normalize(current);
    Matrix q = matmul(xn, b->w_query);
    Matrix k = matmul(xn, b->w_key);
    if (b->mode == heads::AttentionMode::kCodeListing) {
      q = row_l2_normalize(q);
      k = row_l2_normalize(k);
    }
    const Matrix a = matmul(q, transpose(k));
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j)
        if (i != j || b->mode == heads::AttentionMode::kEquation)
          margin = std::min(margin, std::abs(a(i, j)));
    current = heads::transfusion_forward(*b, current).next;
  }
  return margin;
}

}  // namespace

std::vector<GradCheck> gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheck> out;
  auto record = [&](const std::string& name, double err) { out.push_back({name, seed, err}); };

  const std::size_t n = 6;
  const std::size_t m = 4;
  const std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
  const losses::TargetAffinity target = losses::build_target(labels, true);
  const Matrix pairs = losses::build_pair_target(n, false).y;

  // Losses with respect to their matrix argument.
  const Matrix z = rng.normal_matrix(n, m);
  record("nt_xent", check([&](Tape&, std::span<const Var> v) { return losses::nt_xent(v[0], pairs, 0.5); },
                          {z}));
  const Matrix a = rng.uniform_matrix(n, n, -1.0, 1.0);
  record("jsd_half", check([&](Tape&, std::span<const Var> v) {
           return losses::jsd_loss(v[0], target, losses::Mixture::kHalf);
         }, {a}));
  record("jsd_listing", check([&](Tape&, std::span<const Var> v) {
           return losses::jsd_loss(v[0], target, losses::Mixture::kListing);
         }, {a}));
  record("kl_softmax", check([&](Tape&, std::span<const Var> v) {
           return losses::kl_softmax_loss(v[0], target, 0.5);
         }, {a}));
  record("jsd_on_cosine_affinity", check([&](Tape&, std::span<const Var> v) {
           return losses::jsd_loss(losses::cosine_affinity(v[0]), target);
         }, {z}));

  // Encoder: parameters and input.
  {
    const std::vector<std::size_t> widths{m, 5, 3};
    const Encoder enc = init_encoder(widths, rng);
    std::vector<Matrix> ops;
    for (const Matrix* p : enc.parameters()) ops.push_back(*p);
    ops.push_back(rng.normal_matrix(n, m));
    const Matrix w = rng.normal_matrix(n, 3);
    record("encoder", check([&](Tape& t, std::span<const Var> v) {
             return probe_sum(t, encode(v.subspan(0, 4), v[4]), w);
           }, ops));
  }

  // Heads: every kind and attention variant, parameters and input.
  struct Variant {
    std::string name;
    heads::HeadConfig config;
  };
  std::vector<Variant> variants;
  for (auto mode : {heads::AttentionMode::kEquation, heads::AttentionMode::kCodeListing}) {
    for (bool residual : {true, false}) {
      heads::HeadConfig c;
      c.kind = heads::HeadKind::kTransFusion;
      c.dim = m;
      c.depth = 2;
      c.mode = mode;
      c.residual = residual;
      variants.push_back({"transfusion_" + heads::to_string(mode) + (residual ? "_residual" : ""), c});
    }
  }
  for (std::size_t h : {1, 2}) {
    heads::HeadConfig c;
    c.kind = heads::HeadKind::kTransformer;
    c.dim = m;
    c.depth = 2;
    c.heads = h;
    variants.push_back({"transformer_" + std::to_string(h) + "head", c});
  }
  {
    heads::HeadConfig c;
    c.kind = heads::HeadKind::kFfn;
    c.dim = m;
    c.ffn_widths = {m, 6, 6, m};
    variants.push_back({"ffn", c});
  }
  for (const Variant& var : variants) {
    // Without the residual path a row of ReLU(A) can vanish entirely, leaving
    // nothing to normalize; such draws are replaced too.
    heads::ProjectionHead head;
    Matrix x;
    for (std::size_t attempt = 0;; ++attempt) {
      head = heads::init_head(var.config, rng);
      x = rng.normal_matrix(n, m);
      try {
        heads::head_forward(head, x);
        if (relu_margin(head, x) > 1e-3) break;
      } catch (const DegenerateError&) {
      }
      if (attempt == 100) throw DegenerateError("gradient_suite: no usable draw for " + var.name);
    }
    const std::vector<Matrix> ops = head_operands(head, x);
    const std::size_t np = ops.size() - 1;
    const Matrix w = rng.normal_matrix(n, m);
    record("head_" + var.name, check([&](Tape& t, std::span<const Var> v) {
             return probe_sum(t, heads::head_forward(head, v.subspan(0, np), v[np]).output, w);
           }, ops));
    record("head_" + var.name + "+nt_xent", check([&](Tape&, std::span<const Var> v) {
             return losses::nt_xent(heads::head_forward(head, v.subspan(0, np), v[np]).output, pairs, 0.5);
           }, ops));
  }
  return out;
}

}  // namespace tfusion::pipeline
