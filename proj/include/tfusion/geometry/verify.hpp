#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tfusion/geometry/fusion.hpp"

namespace tfusion::geometry {

inline GreedyOptions signed_greedy() {
  GreedyOptions o;
  o.objective = Objective::kSigned;
  return o;
}

struct TrialShape {
  std::size_t ambient_dim = 16;
  std::size_t clusters = 3;
  std::size_t rank = 2;
  std::size_t per_cluster = 10;
};

/// Noiseless block-diagonal construction on one seeded ensemble.
struct Thm1Trial {
  std::uint64_t seed = 0;
  double rho_hat = 0.0;
  double max_cross_abs = 0.0;
  double min_same = 0.0;
  double min_bound = 0.0;   // min over same-cluster pairs of nu_i rho_hat^2
  double min_margin = 0.0;  // min over same-cluster pairs of A_ij - nu_i rho_hat^2
  bool holds = false;       // max_cross_abs < 1e-9 and min_margin >= -1e-6
};

Thm1Trial run_thm1_trial(const TrialShape& shape, std::uint64_t seed,
                         const GreedyOptions& options = signed_greedy());

/// Noisy inputs pushed through residual-free (or residual) constructed layers.
struct Thm2Trial {
  std::uint64_t seed = 0;
  double eps = 0.0;
  double rho_hat = 0.0;
  double delta = 0.0;
  double Delta = 0.0;
  std::vector<double> sharpness;  // per layer
  bool non_decreasing = false;
  NoisyBoundCheck bounds;
  // Asserted pairwise inequalities: cross pairs within ln_beta and same
  // pairs above the corrected in-block bound.
  bool bounds_hold() const { return bounds.cross_violations == 0 && bounds.corrected_violations == 0; }
};

Thm2Trial run_thm2_trial(const TrialShape& shape, double eps, std::size_t layers, bool residual,
                         std::uint64_t seed, const GreedyOptions& options = signed_greedy());

}  // namespace tfusion::geometry
