#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "tfusion/geometry/subspace.hpp"
#include "tfusion/matrix.hpp"
#include "tfusion/rng.hpp"

namespace tfusion::geometry {

// ---------------------------------------------------------------------------
// Cluster integrity
//
// rho_k = max over unit u orthogonal to U_k of min over samples x outside
// cluster k of |x^T u|, and rho = min_k rho_k. The greedy search alternates
// three steps: project u onto the orthogonal complement and normalize, find
// the sample with the smallest projection, then step u toward that sample.
// ---------------------------------------------------------------------------

enum class Objective {
  kAbsolute,  // min |x^T u| (cluster integrity)
  kSigned,    // min x^T u   (witness directions for the block-diagonal construction)
};

struct GreedyOptions {
  std::size_t max_iterations = 500;
  double step = 0.1;
  double tolerance = 1e-6;
  std::size_t restarts = 8;
  Objective objective = Objective::kAbsolute;
};

struct GreedyResult {
  double value = 0.0;            // best min-projection found
  std::vector<double> witness;   // unit direction achieving it
  std::size_t iterations = 0;    // summed over restarts
};

/// Max-min search over unit u orthogonal to the columns of `excluded_basis`
/// (orthonormal, possibly empty), scoring u by the minimum projection of the
/// rows of `samples`. Throws DegenerateError when the complement is trivial.
GreedyResult greedy_max_min(const Matrix& excluded_basis, const Matrix& samples,
                            const GreedyOptions& options, Rng& rng);

/// rho_k for cluster k. "Outside cluster k" means label != k.
GreedyResult rho_greedy(const SubspaceEnsemble& ensemble, const Matrix& samples,
                        std::span<const std::size_t> labels, std::size_t k,
                        const GreedyOptions& options, Rng& rng);

/// Exhaustive grid over the unit sphere of the orthogonal complement of U_k.
/// `resolution` is the number of steps per half turn. Complements of
/// dimension above 3 raise UnsupportedError.
double rho_brute(const SubspaceEnsemble& ensemble, const Matrix& samples,
                 std::span<const std::size_t> labels, std::size_t k, std::size_t resolution);

struct IntegrityResult {
  double rho = 0.0;
  std::vector<double> per_cluster;
  std::vector<std::vector<double>> witnesses;
  std::vector<std::size_t> iterations;
};

IntegrityResult cluster_integrity(const SubspaceEnsemble& ensemble, const ClusteredBatch& batch,
                                  const GreedyOptions& options, Rng& rng);

/// CSV with header `cluster,rho_k,iterations,u_0,...,u_{m-1}`.
void write_integrity_csv(std::ostream& out, const IntegrityResult& result);

// ---------------------------------------------------------------------------
// Noise bounds
// ---------------------------------------------------------------------------

struct NoiseBounds {
  double delta = 0.0;  // upper bound on in-cluster projections onto u_k^perp
  double Delta = 0.0;  // lower bound on out-of-cluster projections
};

/// delta = sqrt(1 - (1-eps)^2), Delta = (1-eps) rho - sqrt((1 - (1-eps)^2)(1 - rho^2)).
NoiseBounds noise_bounds(double eps, double rho);

/// Per-pair quantities from the layer-wise amplification argument.
struct FusionBound {
  double epsilon = 0.0;
  double rho = 0.0;
  double delta = 0.0;
  double Delta = 0.0;
  std::size_t n = 0;
  std::size_t nu_i = 0;
  std::size_t nu_j = 0;
  double ln_alpha = 0.0;     // nu_i * Delta^2
  double ln_beta = 0.0;      // (nu_i + nu_j) delta + (n - nu_i - nu_j) delta^2
  double ratio_bound = 0.0;  // (1/n) exp(n (delta^2 - Delta^2) + delta)

  bool separable() const { return delta < Delta; }
};

FusionBound make_fusion_bound(double eps, double rho, std::size_t n, std::size_t nu_i,
                              std::size_t nu_j);

}  // namespace tfusion::geometry
