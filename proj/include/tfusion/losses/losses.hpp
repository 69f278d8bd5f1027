#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tfusion/matrix.hpp"
#include "tfusion/tape.hpp"

namespace tfusion::losses {

/// Default temperature for the contrastive losses.
inline constexpr double kDefaultTemperature = 0.2;

enum class PositiveSource { kAugmentationPairs, kClassLabels };

/// Binary target affinity Y_ij = 1 iff i != j share a group, optionally
/// row-normalized into distributions.
struct TargetAffinity {
  Matrix y;
  bool row_normalized = false;
  PositiveSource source = PositiveSource::kClassLabels;
};

/// Positives are samples with equal labels.
TargetAffinity build_target(std::span<const std::size_t> labels, bool normalize);

/// Positives are the two views of one source sample; views are adjacent
/// (rows 2s and 2s+1), so n must be even.
TargetAffinity build_pair_target(std::size_t n, bool normalize);

/// Group ids for adjacent view pairs: {0,0,1,1,...}.
std::vector<std::size_t> pair_labels(std::size_t n);

// ---------------------------------------------------------------------------
// NT-Xent
// ---------------------------------------------------------------------------

/// Mean over ordered positive pairs (i, j) of
///   -log( exp(cos(z_i, z_j)/tau) / sum_{k != i} exp(cos(z_i, z_k)/tau) ).
/// `positives` is any matrix whose nonzero off-diagonal entries mark pairs.
Var nt_xent(Var z, const Matrix& positives, double tau = kDefaultTemperature);
double nt_xent(const Matrix& z, const Matrix& positives, double tau = kDefaultTemperature);

// ---------------------------------------------------------------------------
// Divergence losses over an affinity matrix
// ---------------------------------------------------------------------------

/// Square entries, zero the diagonal, add the 1e-10 floor, divide each row by
/// its sum. Rows are strictly positive distributions.
Var g_normalize(Var a);
Matrix g_normalize(const Matrix& a);

enum class Mixture {
  kHalf,     // M = (P + Q) / 2
  kListing,  // M = P + Q, as in the reference listing
};

/// Row-averaged KL(Q || M) + KL(P || M). Entries with zero mass contribute
/// nothing; logarithms use the 1e-10 floor.
double jsd_divergence(const Matrix& p, const Matrix& q, Mixture mixture = Mixture::kHalf);
Var jsd_divergence(Var p, const Matrix& q, Mixture mixture = Mixture::kHalf);

/// JSD between g_normalize(A) and the row-normalized target.
Var jsd_loss(Var a, const TargetAffinity& target, Mixture mixture = Mixture::kHalf);
double jsd_loss(const Matrix& a, const TargetAffinity& target, Mixture mixture = Mixture::kHalf);

/// (1/n) sum_i KL(Q_i || softmax_{j != i}(A_ij / tau)).
Var kl_softmax_loss(Var a, const TargetAffinity& target, double tau = kDefaultTemperature);
double kl_softmax_loss(const Matrix& a, const TargetAffinity& target,
                       double tau = kDefaultTemperature);

/// Cosine-similarity matrix of the rows of z.
Var cosine_affinity(Var z);
Matrix cosine_affinity(const Matrix& z);

}  // namespace tfusion::losses
