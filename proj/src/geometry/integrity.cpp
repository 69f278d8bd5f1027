#include "tfusion/geometry/integrity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "tfusion/errors.hpp"
#include "tfusion/matrix_io.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::geometry {

namespace {

struct MinProjection {
  double value;
  double signed_value;
  std::size_t row;
};

MinProjection min_projection(const Matrix& samples, std::span<const double> u, Objective objective) {
  MinProjection best{std::numeric_limits<double>::infinity(), 0.0, 0};
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const double p = dot(samples.row(i), u);
    const double score = objective == Objective::kAbsolute ? std::abs(p) : p;
    if (score < best.value) best = {score, p, i};
  }
  return best;
}

void normalize_in_place(std::vector<double>& v) {
  const double n = norm(v);
  for (double& x : v) x /= n;
}

Matrix select_rows(const Matrix& samples, std::span<const std::size_t> labels, std::size_t k,
                   bool inside) {
  std::vector<double> data;
  std::size_t count = 0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    if ((labels[i] == k) != inside) continue;
    data.insert(data.end(), samples.row(i).begin(), samples.row(i).end());
    ++count;
  }
  if (count == 0) return {};
  return Matrix(count, samples.cols(), std::move(data));
}

}  // namespace

GreedyResult greedy_max_min(const Matrix& excluded_basis, const Matrix& samples,
                            const GreedyOptions& options, Rng& rng) {
  if (samples.empty()) throw ConfigError("greedy_max_min: no samples to project");
  if (options.max_iterations == 0 || options.restarts == 0) {
    throw ConfigError("greedy_max_min: iteration and restart counts must be positive");
  }
  if (!(options.step > 0.0)) throw ConfigError("greedy_max_min: step size must be positive");
  const std::size_t m = samples.cols();
  if (!excluded_basis.empty() && excluded_basis.cols() >= m) {
    throw DegenerateError("greedy_max_min: excluded subspace spans the ambient space");
  }

  GreedyResult best;
  best.value = -std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < options.restarts; ++restart) {
    std::vector<double> u;
    double n = 0.0;
    while (n < 1e-8) {
      u = project_out(excluded_basis, rng.unit_vector(m));
      n = norm(u);
    }
    double rho = -std::numeric_limits<double>::infinity();
    std::vector<double> witness;
    std::size_t t = 0;
    for (; t < options.max_iterations; ++t) {
      // Calibrate the perpendicular vector.
      std::vector<double> perp = project_out(excluded_basis, u);
      const double pn = norm(perp);
      if (pn < 1e-12) {
        throw DegenerateError("greedy_max_min: search direction collapsed into the subspace");
      }
      for (double& x : perp) x /= pn;

      // Minimum projection sample, then a step toward it. Stepping toward the
      // sample's signed side makes the step increase |x^T u|.
      const MinProjection mp = min_projection(samples, perp, options.objective);
      const double side =
          options.objective == Objective::kAbsolute && mp.signed_value < 0.0 ? -1.0 : 1.0;
      u = perp;
      for (std::size_t j = 0; j < m; ++j) u[j] += options.step * side * samples(mp.row, j);
      normalize_in_place(u);

      if (std::abs(rho - mp.value) < options.tolerance) break;
      if (mp.value > rho) {
        rho = mp.value;
        witness = perp;
      }
    }
    best.iterations += t;
    if (rho > best.value) {
      best.value = rho;
      best.witness = std::move(witness);
    }
  }

  // The iteration stalls within tolerance of a vertex; sample directions
  // projected onto the complement are scored exactly.
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    std::vector<double> perp = project_out(excluded_basis, samples.row(i));
    if (norm(perp) < 1e-8) continue;
    normalize_in_place(perp);
    const double v = min_projection(samples, perp, options.objective).value;
    if (v > best.value) {
      best.value = v;
      best.witness = std::move(perp);
    }
  }
  return best;
}

GreedyResult rho_greedy(const SubspaceEnsemble& ensemble, const Matrix& samples,
                        std::span<const std::size_t> labels, std::size_t k,
                        const GreedyOptions& options, Rng& rng) {
  if (labels.size() != samples.rows()) throw ShapeError("rho_greedy: label count mismatch");
  if (k >= ensemble.clusters()) throw ConfigError("rho_greedy: cluster index out of range");
  if (ensemble.rank(k) >= ensemble.ambient_dim()) {
    throw DegenerateError("rho_greedy: cluster " + std::to_string(k) +
                          " spans the ambient space; no orthogonal direction exists");
  }
  const Matrix outside = select_rows(samples, labels, k, false);
  if (outside.empty()) {
    throw ConfigError("rho_greedy: no samples outside cluster " + std::to_string(k));
  }
  return greedy_max_min(ensemble.basis(k), outside, options, rng);
}

double rho_brute(const SubspaceEnsemble& ensemble, const Matrix& samples,
                 std::span<const std::size_t> labels, std::size_t k, std::size_t resolution) {
  if (labels.size() != samples.rows()) throw ShapeError("rho_brute: label count mismatch");
  if (resolution == 0) throw ConfigError("rho_brute: resolution must be positive");
  const Matrix comp = orthogonal_complement(ensemble.basis(k), ensemble.ambient_dim());
  if (comp.empty()) throw DegenerateError("rho_brute: cluster spans the ambient space");
  if (comp.cols() > 3) {
    throw UnsupportedError("rho_brute: complement dimension " + std::to_string(comp.cols()) +
                           " exceeds 3");
  }
  const Matrix outside = select_rows(samples, labels, k, false);
  if (outside.empty()) throw ConfigError("rho_brute: no samples outside the cluster");

  // Project samples into complement coordinates once: y = C^T x.
  const Matrix coords = matmul(outside, comp);
  const std::size_t c = comp.cols();
  double best = 0.0;
  auto score = [&](std::span<const double> dir) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < coords.rows(); ++i) mn = std::min(mn, std::abs(dot(coords.row(i), dir)));
    best = std::max(best, mn);
  };

  const double pi = std::numbers::pi;
  if (c == 1) {
    const double d[1] = {1.0};
    score(d);
  } else if (c == 2) {
    for (std::size_t i = 0; i < resolution; ++i) {
      const double th = pi * static_cast<double>(i) / static_cast<double>(resolution);
      const double d[2] = {std::cos(th), std::sin(th)};
      score(d);
    }
  } else {
    for (std::size_t i = 0; i <= resolution; ++i) {
      const double th = pi * static_cast<double>(i) / static_cast<double>(resolution);
      for (std::size_t j = 0; j < 2 * resolution; ++j) {
        const double ph = pi * static_cast<double>(j) / static_cast<double>(resolution);
        const double d[3] = {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
        score(d);
      }
    }
  }
  return best;
}

IntegrityResult cluster_integrity(const SubspaceEnsemble& ensemble, const ClusteredBatch& batch,
                                  const GreedyOptions& options, Rng& rng) {
  IntegrityResult result;
  result.rho = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < ensemble.clusters(); ++k) {
    GreedyResult g = rho_greedy(ensemble, batch.samples, batch.labels, k, options, rng);
    result.rho = std::min(result.rho, g.value);
    result.per_cluster.push_back(g.value);
    result.witnesses.push_back(std::move(g.witness));
    result.iterations.push_back(g.iterations);
  }
  return result;
}

void write_integrity_csv(std::ostream& out, const IntegrityResult& result) {
  const std::size_t m = result.witnesses.empty() ? 0 : result.witnesses.front().size();
  out << "cluster,rho_k,iterations";
  for (std::size_t j = 0; j < m; ++j) out << ",u_" << j;
  out << '\n';
  for (std::size_t k = 0; k < result.per_cluster.size(); ++k) {
    out << k << ',' << format_double(result.per_cluster[k]) << ',' << result.iterations[k];
    for (double v : result.witnesses[k]) out << ',' << format_double(v);
    out << '\n';
  }
}

NoiseBounds noise_bounds(double eps, double rho) {
  const double c = 1.0 - eps;
  const double s2 = 1.0 - c * c;
  return {std::sqrt(s2), c * rho - std::sqrt(s2 * (1.0 - rho * rho))};
}

FusionBound make_fusion_bound(double eps, double rho, std::size_t n, std::size_t nu_i,
                              std::size_t nu_j) {
  if (nu_i + nu_j > n) throw ConfigError("make_fusion_bound: nu_i + nu_j exceeds n");
  FusionBound b;
  b.epsilon = eps;
  b.rho = rho;
  const NoiseBounds nb = noise_bounds(eps, rho);
  b.delta = nb.delta;
  b.Delta = nb.Delta;
  b.n = n;
  b.nu_i = nu_i;
  b.nu_j = nu_j;
  const double dn = static_cast<double>(n);
  b.ln_alpha = static_cast<double>(nu_i) * b.Delta * b.Delta;
  b.ln_beta = static_cast<double>(nu_i + nu_j) * b.delta +
              static_cast<double>(n - nu_i - nu_j) * b.delta * b.delta;
  b.ratio_bound = std::exp(dn * (b.delta * b.delta - b.Delta * b.Delta) + b.delta) / dn;
  return b;
}

}  // namespace tfusion::geometry
