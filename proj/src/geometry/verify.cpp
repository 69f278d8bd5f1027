#include "tfusion/geometry/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tfusion::geometry {

namespace {

struct Instance {
  ClusteredBatch batch;
  ConstructedWeights weights;
};

Instance make_instance(const TrialShape& shape, double eps, std::uint64_t seed,
                       const GreedyOptions& options) {
  Rng rng(seed);
  const std::vector<std::size_t> ranks(shape.clusters, shape.rank);
  const SubspaceEnsemble ens = generate_ensemble(shape.ambient_dim, ranks, rng);
  const std::vector<std::size_t> per(shape.clusters, shape.per_cluster);
  ClusteredBatch batch = sample_batch(ens, per, eps, rng);
  ConstructedWeights weights = construct_thm1_weights(ens, batch, options, rng);
  return {std::move(batch), std::move(weights)};
}

}  // namespace

Thm1Trial run_thm1_trial(const TrialShape& shape, std::uint64_t seed,
                         const GreedyOptions& options) {
  const Instance in = make_instance(shape, 0.0, seed, options);
  const Matrix a = constructed_attention(in.batch.samples, in.weights.weights);
  const BlockCheck check = check_block_structure(a, in.batch.labels, in.weights.rho_hat);
  Thm1Trial t;
  t.seed = seed;
  t.rho_hat = in.weights.rho_hat;
  t.max_cross_abs = check.max_cross_abs;
  t.min_same = check.min_same;
  t.min_margin = check.min_margin;
  t.min_bound = std::numeric_limits<double>::infinity();
  for (std::size_t nu : in.batch.cluster_sizes)
    t.min_bound = std::min(t.min_bound, static_cast<double>(nu) * t.rho_hat * t.rho_hat);
  t.holds = check.holds();
  return t;
}

Thm2Trial run_thm2_trial(const TrialShape& shape, double eps, std::size_t layers, bool residual,
                         std::uint64_t seed, const GreedyOptions& options) {
  const Instance in = make_instance(shape, eps, seed, options);
  FusionOptions fo;
  fo.residual = residual;
  const std::vector<AffinityRecord> records = fusion_iterate(in.batch, in.weights.weights, layers, fo);
  Thm2Trial t;
  t.seed = seed;
  t.eps = eps;
  t.rho_hat = in.weights.rho_hat;
  const NoiseBounds nb = noise_bounds(eps, t.rho_hat);
  t.delta = nb.delta;
  t.Delta = nb.Delta;
  for (const AffinityRecord& r : records) t.sharpness.push_back(r.sharpness);
  t.non_decreasing = sharpness_non_decreasing(records);
  t.bounds = check_noisy_bounds(in.batch, in.weights);
  return t;
}

}  // namespace tfusion::geometry
