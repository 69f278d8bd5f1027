#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tfusion/matrix.hpp"
#include "tfusion/rng.hpp"

namespace tfusion::geometry {

/// K orthonormal bases U_k (ambient_dim x r_k) living in a common ambient space.
/// Construction enforces U_k^T U_k = I and (K-1) * max r_k < ambient_dim.
class SubspaceEnsemble {
 public:
  /// Validates and adopts `bases`. Throws ConfigError on a violated invariant.
  SubspaceEnsemble(std::size_t ambient_dim, std::vector<Matrix> bases);

  std::size_t ambient_dim() const { return ambient_dim_; }
  std::size_t clusters() const { return bases_.size(); }
  const Matrix& basis(std::size_t k) const { return bases_.at(k); }
  std::size_t rank(std::size_t k) const { return bases_.at(k).cols(); }
  const std::vector<Matrix>& bases() const { return bases_; }

  /// Orthonormal basis of the span of every subspace except `k`.
  Matrix basis_of_others(std::size_t k) const;

 private:
  std::size_t ambient_dim_;
  std::vector<Matrix> bases_;
};

enum class EnsembleMode {
  kRandom,       // orthonormalized Gaussian bases
  kAxisAligned,  // disjoint blocks of coordinate axes
};

/// Throws ConfigError when (K-1) * max(ranks) >= m.
SubspaceEnsemble generate_ensemble(std::size_t ambient_dim, std::span<const std::size_t> ranks,
                                   Rng& rng, EnsembleMode mode = EnsembleMode::kRandom);

/// How clean points are drawn inside a subspace.
enum class Orientation {
  // Nonnegative combinations of the basis columns. Keeps every clean point of
  // a cluster on one side of any direction positively aligned with the basis,
  // which the block-diagonal construction relies on.
  kCone,
  // Uniform on the unit sphere of the subspace (both signs).
  kSphere,
};

/// Samples with 0-based cluster labels. Rows are unit norm.
struct ClusteredBatch {
  Matrix samples;
  Matrix clean;                            // noiseless counterparts of `samples`
  std::vector<std::size_t> labels;         // cluster index per row, in [0, K)
  std::vector<std::size_t> cluster_sizes;  // nu_i: same-cluster count for row i (including i)
  double noise_level = 0.0;

  std::size_t size() const { return labels.size(); }
  std::size_t clusters() const;
  std::vector<std::size_t> members(std::size_t k) const;
};

/// Cluster sizes nu_i implied by a label vector.
std::vector<std::size_t> same_cluster_counts(std::span<const std::size_t> labels);

/// Rotates `clean` (unit) toward a uniformly random orthogonal direction so
/// the cosine with `clean` is exactly 1 - eps', eps' ~ U[0, eps].
std::vector<double> perturb(std::span<const double> clean, double eps, Rng& rng);

/// Draws per_cluster[k] unit samples from subspace k, perturbed with noise
/// bounded by `eps`. Rows are grouped by cluster in order.
ClusteredBatch sample_batch(const SubspaceEnsemble& ensemble,
                            std::span<const std::size_t> per_cluster, double eps, Rng& rng,
                            Orientation orientation = Orientation::kCone);

}  // namespace tfusion::geometry
