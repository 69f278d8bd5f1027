#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "tfusion/geometry/fusion.hpp"
#include "tfusion/heads/blocks.hpp"
#include "tfusion/rng.hpp"

namespace tfusion::heads {

enum class HeadKind { kFfn, kTransFusion, kTransformer };

std::string to_string(HeadKind kind);
HeadKind parse_head_kind(const std::string& s);
std::string to_string(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& s);

using Block = std::variant<DenseLayer, TransFusionBlock, MultiHeadBlock>;

/// Projection head: an ordered stack of blocks of one kind.
///   ffn         - dense layers with GeLU between them (none after the last)
///   transfusion - ReLU attention blocks; output rows are L2-normalized
///   transformer - pre-norm softmax multi-head blocks
struct ProjectionHead {
  HeadKind kind = HeadKind::kTransFusion;
  std::vector<Block> blocks;

  std::size_t depth() const { return blocks.size(); }
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::size_t parameter_count() const;
};

struct HeadConfig {
  HeadKind kind = HeadKind::kTransFusion;
  std::size_t dim = 32;                   // m: input and output width of attention blocks
  std::vector<std::size_t> ffn_widths;    // ffn kind: full chain of widths, e.g. {32, 64, 32}
  std::size_t depth = 4;                  // attention blocks
  std::size_t heads = 1;                  // transformer kind
  std::size_t ffn_hidden = 0;             // transformer FFN width; 0 means 2 * dim
  AttentionMode mode = AttentionMode::kCodeListing;
  bool residual = true;
};

/// Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)); layer-norm scale 1, shift 0.
ProjectionHead init_head(const HeadConfig& config, Rng& rng);

/// Which attention matrices to keep from multi-head blocks.
enum class RecordPolicy { kFirstHead, kAllHeads };

struct HeadTapeOutput {
  Var output;
  std::vector<Var> attention;          // per recorded attention matrix
  std::vector<std::size_t> layer;      // 1-based block index for each entry of `attention`
};

/// Folds the blocks over x. `params` are the head's parameters bound onto the tape.
HeadTapeOutput head_forward(const ProjectionHead& head, std::span<const Var> params, Var x,
                            RecordPolicy policy = RecordPolicy::kFirstHead);

struct HeadResult {
  Matrix output;
  std::vector<geometry::AffinityRecord> records;
};

/// Plain evaluation. Records carry `labels` and their sharpness when labels
/// are supplied (sharpness stays NaN when undefined for the labeling).
HeadResult head_forward(const ProjectionHead& head, const Matrix& x,
                        std::span<const std::size_t> labels = {},
                        RecordPolicy policy = RecordPolicy::kFirstHead);

}  // namespace tfusion::heads
