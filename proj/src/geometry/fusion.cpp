#include "tfusion/geometry/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "tfusion/errors.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::geometry {

double sharpness(const Matrix& attention, std::span<const std::size_t> labels,
                 double zero_tolerance) {
  const std::size_t n = labels.size();
  if (attention.rows() != n || attention.cols() != n) {
    throw ShapeError("sharpness: attention " + attention.shape_string() + " for " +
                     std::to_string(n) + " labels");
  }
  double min_same = std::numeric_limits<double>::infinity();
  double max_cross = -std::numeric_limits<double>::infinity();
  bool have_same = false;
  bool have_cross = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (labels[i] == labels[j]) {
        min_same = std::min(min_same, attention(i, j));
        have_same = true;
      } else {
        max_cross = std::max(max_cross, attention(i, j));
        have_cross = true;
      }
    }
  }
  if (!have_same) throw DegenerateError("sharpness: no same-cluster pair");
  if (!have_cross) throw DegenerateError("sharpness: no cross-cluster pair");
  if (min_same <= 0.0) return 0.0;
  if (max_cross <= zero_tolerance) return kInfiniteSharpness;
  return min_same / max_cross;
}

ConstructedWeights construct_thm1_weights(const SubspaceEnsemble& ensemble,
                                          const ClusteredBatch& batch, const GreedyOptions& options,
                                          Rng& rng) {
  const std::size_t m = ensemble.ambient_dim();
  if (batch.samples.cols() != m) throw ShapeError("construct_thm1_weights: dimension mismatch");
  GreedyOptions signed_options = options;
  signed_options.objective = Objective::kSigned;

  ConstructedWeights out;
  out.weights = Matrix(m, batch.size());
  out.rho_hat = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < ensemble.clusters(); ++c) {
    const Matrix others = ensemble.basis_of_others(c);
    if (!others.empty() && others.cols() >= m) {
      throw ConfigError("construct_thm1_weights: rank condition violated; no direction is "
                        "orthogonal to every other subspace of cluster " + std::to_string(c));
    }
    const std::vector<std::size_t> members = batch.members(c);
    if (members.empty()) {
      out.directions.emplace_back();
      out.cluster_rho.push_back(0.0);
      continue;
    }
    Matrix own(members.size(), m);
    for (std::size_t r = 0; r < members.size(); ++r)
      for (std::size_t j = 0; j < m; ++j) own(r, j) = batch.samples(members[r], j);

    GreedyResult g = greedy_max_min(others, own, signed_options, rng);
    std::vector<double> w = project_out(others, g.witness);
    const double wn = norm(w);
    for (double& v : w) v /= wn;

    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < own.rows(); ++r) mn = std::min(mn, dot(own.row(r), w));
    for (std::size_t i : members)
      for (std::size_t j = 0; j < m; ++j) out.weights(j, i) = w[j];
    out.directions.push_back(std::move(w));
    out.cluster_rho.push_back(mn);
    out.rho_hat = std::min(out.rho_hat, mn);
  }
  return out;
}

Matrix constructed_attention(const Matrix& samples, const Matrix& weights) {
  const Matrix xw = matmul(samples, weights);
  return matmul(xw, transpose(xw));
}

BlockCheck check_block_structure(const Matrix& attention, std::span<const std::size_t> labels,
                                 double rho) {
  const std::vector<std::size_t> nu = same_cluster_counts(labels);
  BlockCheck c;
  c.min_same = std::numeric_limits<double>::infinity();
  c.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i == j) continue;
      const double a = attention(i, j);
      if (labels[i] == labels[j]) {
        c.min_same = std::min(c.min_same, a);
        c.min_margin = std::min(c.min_margin, a - static_cast<double>(nu[i]) * rho * rho);
      } else {
        c.max_cross_abs = std::max(c.max_cross_abs, std::abs(a));
      }
    }
  }
  return c;
}

NoisyBoundCheck check_noisy_bounds(const ClusteredBatch& batch, const ConstructedWeights& weights,
                                   double slack) {
  const std::size_t n = batch.size();
  const double eps = batch.noise_level;
  const Matrix attention = constructed_attention(batch.samples, weights.weights);

  // Clean per-cluster projection onto the cluster's direction plays the role of rho.
  std::vector<double> clean_rho(weights.directions.size(), 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = weights.directions[batch.labels[i]];
    clean_rho[batch.labels[i]] = std::min(clean_rho[batch.labels[i]], dot(batch.clean.row(i), w));
  }

  NoisyBoundCheck out;
  out.worst_cross_slack = std::numeric_limits<double>::infinity();
  out.worst_alpha_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::size_t ci = batch.labels[i];
      const std::size_t cj = batch.labels[j];
      const double a = attention(i, j);
      if (ci != cj) {
        const FusionBound b = make_fusion_bound(eps, clean_rho[ci], n, batch.cluster_sizes[i],
                                                batch.cluster_sizes[j]);
        ++out.cross_pairs;
        const double s = b.ln_beta - std::abs(a);
        out.worst_cross_slack = std::min(out.worst_cross_slack, s);
        if (s < -slack) ++out.cross_violations;
      } else {
        const FusionBound b = make_fusion_bound(eps, clean_rho[ci], n, batch.cluster_sizes[i], 0);
        if (b.Delta < 0.0) continue;
        ++out.same_pairs;
        const double s = a - b.ln_alpha;
        out.worst_alpha_slack = std::min(out.worst_alpha_slack, s);
        if (s < -slack) ++out.alpha_violations;
        const double corrected =
            b.ln_alpha - static_cast<double>(n - batch.cluster_sizes[i]) * b.delta * b.delta;
        if (a < corrected - slack) ++out.corrected_violations;
      }
    }
  }
  return out;
}

std::vector<AffinityRecord> fusion_iterate(const ClusteredBatch& batch, const Matrix& weights,
                                           std::size_t layers, const FusionOptions& options) {
  if (layers == 0) throw ConfigError("fusion_iterate: need at least one layer");
  const std::size_t m = batch.samples.cols();
  if (weights.rows() != m) throw ShapeError("fusion_iterate: weights must have m rows");
  const Matrix value = options.value.empty() ? Matrix::identity(m) : options.value;
  if (value.rows() != m || value.cols() != m) throw ShapeError("fusion_iterate: W_V must be m x m");

  std::vector<AffinityRecord> records;
  Matrix x = batch.samples;
  for (std::size_t layer = 1; layer <= layers; ++layer) {
    x = row_l2_normalize(x);
    Matrix a = constructed_attention(x, weights);
    const double s = sharpness(a, batch.labels, options.zero_tolerance);
    Matrix next = matmul(relu(a), matmul(x, value));
    if (options.residual) next = add(next, x);
    records.push_back({layer, std::move(a), batch.labels, s});
    x = std::move(next);
  }
  return records;
}

bool sharpness_non_decreasing(std::span<const AffinityRecord> records) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].sharpness < records[i - 1].sharpness) return false;
  }
  return true;
}

}  // namespace tfusion::geometry
