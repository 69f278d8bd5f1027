#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "tfusion/geometry/integrity.hpp"
#include "tfusion/geometry/subspace.hpp"
#include "tfusion/matrix.hpp"

namespace tfusion::geometry {

inline constexpr double kInfiniteSharpness = std::numeric_limits<double>::infinity();
/// Cross-cluster attention at or below this counts as zero when scoring
/// sharpness; it absorbs the ~1e-16 residue of exact orthogonality.
inline constexpr double kSharpnessZeroTolerance = 1e-9;

/// min over same-cluster i != j of A_ij divided by max over cross-cluster
/// pairs of A_pq. Returns +inf when the denominator is <= zero_tolerance and
/// the numerator is positive, and 0 when the numerator is <= 0. Throws
/// DegenerateError when either kind of pair is missing.
double sharpness(const Matrix& attention, std::span<const std::size_t> labels,
                 double zero_tolerance = 0.0);

/// One attention matrix observed at a given layer.
struct AffinityRecord {
  std::size_t layer = 0;  // 1-based
  Matrix attention;
  std::vector<std::size_t> labels;
  double sharpness = 0.0;
};

/// Block-diagonal construction: column i of `weights` is a unit vector
/// orthogonal to every subspace except the one of sample i, chosen by a
/// signed greedy max-min search over the samples of that cluster. The query
/// and key weights are both `weights`, so A = (XW)(XW)^T.
struct ConstructedWeights {
  Matrix weights;                        // m x n
  std::vector<std::vector<double>> directions;  // one unit direction per cluster
  std::vector<double> cluster_rho;       // min_{i in cluster} x_i^T w_cluster over the batch samples
  double rho_hat = 0.0;                  // min over clusters of cluster_rho
};

ConstructedWeights construct_thm1_weights(const SubspaceEnsemble& ensemble,
                                          const ClusteredBatch& batch, const GreedyOptions& options,
                                          Rng& rng);

/// A = (X W)(X W)^T.
Matrix constructed_attention(const Matrix& samples, const Matrix& weights);

/// Block statistics of an attention matrix built from constructed weights.
struct BlockCheck {
  double max_cross_abs = 0.0;  // max |A_pq| over cross-cluster pairs
  double min_same = 0.0;       // min A_ij over same-cluster i != j
  double min_margin = 0.0;     // min over same-cluster i != j of A_ij - nu_i rho^2
  bool holds(double cross_tol = 1e-9, double margin_tol = 1e-6) const {
    return max_cross_abs < cross_tol && min_margin >= -margin_tol;
  }
};

BlockCheck check_block_structure(const Matrix& attention, std::span<const std::size_t> labels,
                                 double rho);

/// Noisy-input check of the per-pair bounds. delta/Delta use the clean
/// per-cluster projection min_{i in c} x_i^T w_c in place of rho.
struct NoisyBoundCheck {
  std::size_t cross_pairs = 0;
  std::size_t cross_violations = 0;      // |A_pq| > ln_beta
  std::size_t same_pairs = 0;            // pairs with Delta >= 0
  std::size_t alpha_violations = 0;      // A_ij < nu_i Delta^2
  std::size_t corrected_violations = 0;  // A_ij < nu_i Delta^2 - (n - nu_i) delta^2
  double worst_cross_slack = 0.0;        // min over cross pairs of ln_beta - |A_pq|
  double worst_alpha_slack = 0.0;        // min over same pairs of A_ij - ln_alpha
};

NoisyBoundCheck check_noisy_bounds(const ClusteredBatch& batch, const ConstructedWeights& weights,
                                   double slack = 1e-9);

struct FusionOptions {
  bool residual = false;
  Matrix value;  // m x m; identity when empty
  double zero_tolerance = kSharpnessZeroTolerance;
};

/// Applies `layers` constructed blocks: X <- rownorm(X); A = (XW)(XW)^T;
/// X <- ReLU(A)(X W_V) [+ X]. Records A and its sharpness per layer.
std::vector<AffinityRecord> fusion_iterate(const ClusteredBatch& batch, const Matrix& weights,
                                           std::size_t layers, const FusionOptions& options = {});

/// Whether sharpness never decreases across the given records.
bool sharpness_non_decreasing(std::span<const AffinityRecord> records);

}  // namespace tfusion::geometry
