#include "tfusion/heads/head.hpp"

#include <cmath>

#include "tfusion/errors.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::heads {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return rng.uniform_matrix(rows, cols, -bound, bound);
}

std::size_t block_param_count(const Block& block) {
  return std::visit([](const auto& b) { return b.parameters().size(); }, block);
}

}  // namespace

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::kFfn: return "ffn";
    case HeadKind::kTransFusion: return "transfusion";
    case HeadKind::kTransformer: return "transformer";
  }
  return "?";
}

HeadKind parse_head_kind(const std::string& s) {
  if (s == "ffn") return HeadKind::kFfn;
  if (s == "transfusion") return HeadKind::kTransFusion;
  if (s == "transformer") return HeadKind::kTransformer;
  throw ConfigError("unknown head kind '" + s + "' (expected ffn, transfusion or transformer)");
}

std::string to_string(AttentionMode mode) {
  return mode == AttentionMode::kEquation ? "equation" : "code-listing";
}

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "equation") return AttentionMode::kEquation;
  if (s == "code-listing") return AttentionMode::kCodeListing;
  throw ConfigError("unknown attention mode '" + s + "' (expected equation or code-listing)");
}

std::vector<Matrix*> ProjectionHead::parameters() {
  std::vector<Matrix*> out;
  for (auto& block : blocks) {
    std::visit([&out](auto& b) {
      for (Matrix* p : b.parameters()) out.push_back(p);
    }, block);
  }
  return out;
}

std::vector<const Matrix*> ProjectionHead::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& block : blocks) {
    std::visit([&out](const auto& b) {
      for (const Matrix* p : b.parameters()) out.push_back(p);
    }, block);
  }
  return out;
}

std::size_t ProjectionHead::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += p->size();
  return n;
}

ProjectionHead init_head(const HeadConfig& config, Rng& rng) {
  ProjectionHead head;
  head.kind = config.kind;
  const std::size_t m = config.dim;
  if (m == 0) throw ConfigError("init_head: dimension must be positive");

  switch (config.kind) {
    case HeadKind::kFfn: {
      std::vector<std::size_t> widths = config.ffn_widths;
      if (widths.empty()) widths.assign(config.depth + 1, m);
      if (widths.size() < 2) throw ConfigError("init_head: ffn needs at least two widths");
      if (widths.front() != m) throw ConfigError("init_head: ffn input width must equal dim");
      for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (widths[l] == 0 || widths[l + 1] == 0) throw ConfigError("init_head: zero ffn width");
        DenseLayer layer;
        layer.weight = uniform_init(widths[l], widths[l + 1], widths[l], rng);
        layer.bias = uniform_init(1, widths[l + 1], widths[l], rng);
        head.blocks.emplace_back(std::move(layer));
      }
      break;
    }
    case HeadKind::kTransFusion: {
      for (std::size_t l = 0; l < config.depth; ++l) {
        TransFusionBlock b;
        b.w_query = uniform_init(m, m, m, rng);
        b.w_key = uniform_init(m, m, m, rng);
        b.w_value = uniform_init(m, m, m, rng);
        b.mode = config.mode;
        b.residual = config.residual;
        head.blocks.emplace_back(std::move(b));
      }
      break;
    }
    case HeadKind::kTransformer: {
      if (config.depth == 0) break;
      const std::size_t h = config.heads;
      if (h == 0 || m % h != 0) {
        throw ConfigError("init_head: dim " + std::to_string(m) + " is not divisible by " +
                          std::to_string(h) + " heads");
      }
      const std::size_t dk = m / h;
      const std::size_t f = config.ffn_hidden == 0 ? 2 * m : config.ffn_hidden;
      for (std::size_t l = 0; l < config.depth; ++l) {
        MultiHeadBlock b;
        b.heads = h;
        b.head_dim = dk;
        for (std::size_t i = 0; i < h; ++i) b.w_query.push_back(uniform_init(m, dk, m, rng));
        for (std::size_t i = 0; i < h; ++i) b.w_key.push_back(uniform_init(m, dk, m, rng));
        for (std::size_t i = 0; i < h; ++i) b.w_value.push_back(uniform_init(m, dk, m, rng));
        b.w_out = uniform_init(h * dk, m, h * dk, rng);
        b.ffn_w1 = uniform_init(m, f, m, rng);
        b.ffn_b1 = uniform_init(1, f, m, rng);
        b.ffn_w2 = uniform_init(f, m, f, rng);
        b.ffn_b2 = uniform_init(1, m, f, rng);
        b.ln1_scale = Matrix::ones(1, m);
        b.ln1_shift = Matrix(1, m);
        b.ln2_scale = Matrix::ones(1, m);
        b.ln2_shift = Matrix(1, m);
        head.blocks.emplace_back(std::move(b));
      }
      break;
    }
  }
  return head;
}

HeadTapeOutput head_forward(const ProjectionHead& head, std::span<const Var> params, Var x,
                            RecordPolicy policy) {
  HeadTapeOutput out;
  std::size_t cursor = 0;
  Var current = x;
  for (std::size_t l = 0; l < head.blocks.size(); ++l) {
    const Block& block = head.blocks[l];
    const std::size_t count = block_param_count(block);
    if (cursor + count > params.size()) throw UsageError("head_forward: too few parameters");
    const auto block_params = params.subspan(cursor, count);
    cursor += count;
    std::visit(Overloaded{
                   [&](const DenseLayer&) {
                     current = dense_forward(block_params, current);
                     if (l + 1 < head.blocks.size()) current = gelu(current);
                   },
                   [&](const TransFusionBlock& b) {
                     const TransFusionOutput r = transfusion_forward(b, block_params, current);
                     current = r.next;
                     out.attention.push_back(r.attention);
                     out.layer.push_back(l + 1);
                   },
                   [&](const MultiHeadBlock& b) {
                     const MultiHeadOutput r = multihead_forward(b, block_params, current);
                     current = r.next;
                     const std::size_t keep =
                         policy == RecordPolicy::kAllHeads ? r.attention.size() : 1;
                     for (std::size_t i = 0; i < keep; ++i) {
                       out.attention.push_back(r.attention[i]);
                       out.layer.push_back(l + 1);
                     }
                   },
               },
               block);
  }
  if (cursor != params.size()) throw UsageError("head_forward: too many parameters");
  if (head.kind == HeadKind::kTransFusion) current = row_l2_normalize(current);
  out.output = current;
  return out;
}

HeadResult head_forward(const ProjectionHead& head, const Matrix& x,
                        std::span<const std::size_t> labels, RecordPolicy policy) {
  Tape tape;
  const std::vector<Var> params = bind_parameters(tape, head.parameters(), false);
  const HeadTapeOutput out = head_forward(head, params, tape.constant(x), policy);
  HeadResult result;
  result.output = out.output.value();
  for (std::size_t i = 0; i < out.attention.size(); ++i) {
    geometry::AffinityRecord r;
    r.layer = out.layer[i];
    r.attention = out.attention[i].value();
    r.labels.assign(labels.begin(), labels.end());
    r.sharpness = std::nan("");
    if (!labels.empty()) {
      try {
        r.sharpness =
            geometry::sharpness(r.attention, labels, geometry::kSharpnessZeroTolerance);
      } catch (const DegenerateError&) {
      }
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

}  // namespace tfusion::heads
