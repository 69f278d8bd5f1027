#include "tfusion/geometry/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tfusion/errors.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::geometry {

SubspaceEnsemble::SubspaceEnsemble(std::size_t ambient_dim, std::vector<Matrix> bases)
    : ambient_dim_(ambient_dim), bases_(std::move(bases)) {
  if (ambient_dim_ == 0) throw ConfigError("ensemble: ambient dimension must be positive");
  if (bases_.empty()) throw ConfigError("ensemble: no subspaces");
  std::size_t max_rank = 0;
  for (std::size_t k = 0; k < bases_.size(); ++k) {
    const Matrix& u = bases_[k];
    if (u.empty() || u.rows() != ambient_dim_) {
      throw ConfigError("ensemble: basis " + std::to_string(k) + " has shape " +
                        u.shape_string() + ", expected " + std::to_string(ambient_dim_) + "xr");
    }
    const Matrix gram = matmul(transpose(u), u);
    if (max_abs_diff(gram, Matrix::identity(u.cols())) > 1e-10) {
      throw ConfigError("ensemble: basis " + std::to_string(k) + " is not orthonormal");
    }
    max_rank = std::max(max_rank, u.cols());
  }
  if ((bases_.size() - 1) * max_rank >= ambient_dim_) {
    throw ConfigError("ensemble: rank condition (K-1)*max_rank < m violated: (" +
                      std::to_string(bases_.size()) + "-1)*" + std::to_string(max_rank) +
                      " >= " + std::to_string(ambient_dim_));
  }
}

Matrix SubspaceEnsemble::basis_of_others(std::size_t k) const {
  std::vector<Matrix> others;
  for (std::size_t j = 0; j < bases_.size(); ++j)
    if (j != k) others.push_back(bases_[j]);
  if (others.empty()) return {};
  return orthonormal_columns(hconcat(others), 1e-8);
}

SubspaceEnsemble generate_ensemble(std::size_t ambient_dim, std::span<const std::size_t> ranks,
                                   Rng& rng, EnsembleMode mode) {
  if (ranks.empty()) throw ConfigError("generate_ensemble: need at least one subspace");
  if (std::find(ranks.begin(), ranks.end(), std::size_t{0}) != ranks.end()) {
    throw ConfigError("generate_ensemble: ranks must be positive");
  }
  const std::size_t max_rank = *std::max_element(ranks.begin(), ranks.end());
  if ((ranks.size() - 1) * max_rank >= ambient_dim) {
    throw ConfigError("generate_ensemble: rank condition (K-1)*max_rank < m violated for m=" +
                      std::to_string(ambient_dim));
  }

  std::vector<Matrix> bases;
  if (mode == EnsembleMode::kAxisAligned) {
    std::size_t offset = 0;
    for (std::size_t r : ranks) {
      if (offset + r > ambient_dim) {
        throw ConfigError("generate_ensemble: axis-aligned ranks exceed ambient dimension");
      }
      Matrix u(ambient_dim, r);
      for (std::size_t c = 0; c < r; ++c) u(offset + c, c) = 1.0;
      bases.push_back(std::move(u));
      offset += r;
    }
  } else {
    for (std::size_t r : ranks) {
      Matrix q;
      while (q.empty() || q.cols() != r) q = orthonormal_columns(rng.normal_matrix(ambient_dim, r));
      bases.push_back(std::move(q));
    }
  }
  return SubspaceEnsemble(ambient_dim, std::move(bases));
}

std::size_t ClusteredBatch::clusters() const {
  return std::set<std::size_t>(labels.begin(), labels.end()).size();
}

std::vector<std::size_t> ClusteredBatch::members(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> same_cluster_counts(std::span<const std::size_t> labels) {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[i] = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), labels[i]));
  return out;
}

std::vector<double> perturb(std::span<const double> clean, double eps, Rng& rng) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("perturb: noise level must lie in [0, 1)");
  std::vector<double> out(clean.begin(), clean.end());
  if (eps == 0.0) return out;
  const double cosine = 1.0 - rng.uniform(0.0, eps);
  const double sine = std::sqrt(1.0 - cosine * cosine);
  Matrix basis(clean.size(), 1, std::vector<double>(clean.begin(), clean.end()));
  std::vector<double> dir;
  double n = 0.0;
  while (n < 1e-8) {
    dir = project_out(basis, rng.unit_vector(clean.size()));
    n = norm(dir);
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = cosine * clean[j] + sine * dir[j] / n;
  const double total = norm(out);
  for (double& v : out) v /= total;
  return out;
}

ClusteredBatch sample_batch(const SubspaceEnsemble& ensemble,
                            std::span<const std::size_t> per_cluster, double eps, Rng& rng,
                            Orientation orientation) {
  if (per_cluster.size() != ensemble.clusters()) {
    throw ConfigError("sample_batch: expected " + std::to_string(ensemble.clusters()) +
                      " cluster counts, got " + std::to_string(per_cluster.size()));
  }
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("sample_batch: noise level must lie in [0, 1)");
  std::size_t n = 0;
  for (std::size_t k = 0; k < per_cluster.size(); ++k) {
    if (per_cluster[k] == 0) {
      throw ConfigError("sample_batch: cluster " + std::to_string(k) + " has no samples");
    }
    n += per_cluster[k];
  }

  const std::size_t m = ensemble.ambient_dim();
  ClusteredBatch batch;
  batch.samples = Matrix(n, m);
  batch.clean = Matrix(n, m);
  batch.noise_level = eps;
  std::size_t row = 0;
  for (std::size_t k = 0; k < per_cluster.size(); ++k) {
    const Matrix& u = ensemble.basis(k);
    for (std::size_t s = 0; s < per_cluster[k]; ++s, ++row) {
      std::vector<double> coef(u.cols());
      double cn = 0.0;
      while (cn < 1e-12) {
        for (double& c : coef) {
          c = rng.normal();
          if (orientation == Orientation::kCone) c = std::abs(c);
        }
        cn = norm(coef);
      }
      std::vector<double> clean(m, 0.0);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < u.cols(); ++c) clean[r] += u(r, c) * coef[c] / cn;
      const double len = norm(clean);
      for (double& v : clean) v /= len;
      const std::vector<double> noisy = perturb(clean, eps, rng);
      for (std::size_t j = 0; j < m; ++j) {
        batch.clean(row, j) = clean[j];
        batch.samples(row, j) = noisy[j];
      }
      batch.labels.push_back(k);
    }
  }
  batch.cluster_sizes = same_cluster_counts(batch.labels);
  return batch;
}

}  // namespace tfusion::geometry
