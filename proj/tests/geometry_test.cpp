#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "tfusion/errors.hpp"
#include "tfusion/geometry/fusion.hpp"
#include "tfusion/geometry/integrity.hpp"
#include "tfusion/geometry/records_io.hpp"
#include "tfusion/geometry/subspace.hpp"
#include "tfusion/geometry/verify.hpp"
#include "tfusion/ops.hpp"

using namespace tfusion;
using namespace tfusion::geometry;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

ClusteredBatch batch_of(const Matrix& samples, std::vector<std::size_t> labels) {
  ClusteredBatch b;
  b.samples = samples;
  b.clean = samples;
  b.cluster_sizes = same_cluster_counts(labels);
  b.labels = std::move(labels);
  return b;
}

// Both signs of each sample, so the min |x^T u| only depends on the line.
ClusteredBatch line_batch(const SubspaceEnsemble& ens) {
  std::vector<double> data;
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < ens.clusters(); ++k) {
    for (double sign : {1.0, -1.0}) {
      for (std::size_t r = 0; r < ens.ambient_dim(); ++r) data.push_back(sign * ens.basis(k)(r, 0));
      labels.push_back(k);
    }
  }
  return batch_of(Matrix(labels.size(), ens.ambient_dim(), std::move(data)), labels);
}

// Independent grid oracle in the plane spanned by two orthonormal vectors.
double grid_max_min_2d(const std::vector<double>& a, const std::vector<double>& b,
                       const Matrix& samples, std::size_t steps) {
  double best = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double th = std::numbers::pi * static_cast<double>(s) / static_cast<double>(steps);
    double mn = 1e300;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
      double p = 0.0;
      for (std::size_t j = 0; j < samples.cols(); ++j)
        p += samples(i, j) * (std::cos(th) * a[j] + std::sin(th) * b[j]);
      mn = std::min(mn, std::abs(p));
    }
    best = std::max(best, mn);
  }
  return best;
}

}  // namespace

TEST_SUITE("ensemble") {
  TEST_CASE("axis-aligned coordinate subspaces") {
    Rng rng(1);
    const std::size_t ranks[] = {1, 1};
    const auto ens = generate_ensemble(4, ranks, rng, EnsembleMode::kAxisAligned);
    CHECK(ens.basis(0) == column({1, 0, 0, 0}));
    CHECK(ens.basis(1) == column({0, 1, 0, 0}));
  }

  TEST_CASE("random bases are orthonormal") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const std::size_t ranks[] = {2, 2, 2};
      const auto ens = generate_ensemble(16, ranks, rng);
      for (const Matrix& u : ens.bases()) {
        CHECK(max_abs_diff(matmul(transpose(u), u), Matrix::identity(2)) < 1e-10);
      }
    }
  }

  TEST_CASE("rank condition is strict") {
    Rng rng(1);
    const std::size_t tight[] = {8, 8, 8};
    CHECK_THROWS_AS(generate_ensemble(16, tight, rng), ConfigError);
    const std::size_t ok[] = {8, 8};
    CHECK_NOTHROW(generate_ensemble(16, ok, rng));
    const std::size_t just[] = {7, 7, 7};
    CHECK_NOTHROW(generate_ensemble(15, just, rng));
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("noiseless samples lie in their subspace") {
    Rng rng(2);
    const std::size_t ranks[] = {2, 2, 2};
    const auto ens = generate_ensemble(16, ranks, rng);
    const std::size_t per[] = {10, 10, 10};
    const auto batch = sample_batch(ens, per, 0.0, rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto r = project_out(ens.basis(batch.labels[i]), batch.samples.row(i));
      CHECK(norm(r) < 1e-10);
      CHECK(std::abs(norm(batch.samples.row(i)) - 1.0) < 1e-10);
    }
  }

  TEST_CASE("noise keeps cosine to the subspace above 1 - eps") {
    Rng rng(3);
    const std::size_t ranks[] = {2, 2};
    const auto ens = generate_ensemble(8, ranks, rng);
    const std::size_t per[] = {5000, 5000};
    const auto batch = sample_batch(ens, per, 0.1, rng, Orientation::kSphere);
    double worst = 1.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto x = batch.samples.row(i);
      const auto r = project_out(ens.basis(batch.labels[i]), x);
      const double in_norm = std::sqrt(std::max(0.0, 1.0 - dot(r, r)));
      worst = std::min(worst, in_norm / norm(x));
    }
    CHECK(worst >= 0.9 - 1e-10);
  }

  TEST_CASE("perturb hits the requested cosine") {
    Rng rng(4);
    const std::vector<double> clean{0.0, 1.0, 0.0, 0.0};
    for (int i = 0; i < 100; ++i) {
      const auto v = perturb(clean, 0.2, rng);
      const double c = dot(v, clean);
      CHECK(c >= 0.8 - 1e-12);
      CHECK(c <= 1.0 + 1e-12);
      CHECK(std::abs(norm(v) - 1.0) < 1e-12);
    }
  }

  TEST_CASE("cluster sizes") {
    Rng rng(5);
    const std::size_t ranks[] = {1, 1};
    const auto ens = generate_ensemble(4, ranks, rng);
    const std::size_t per[] = {3, 5};
    const auto batch = sample_batch(ens, per, 0.0, rng);
    CHECK(batch.cluster_sizes == std::vector<std::size_t>{3, 3, 3, 5, 5, 5, 5, 5});
    const std::size_t empty[] = {3, 0};
    CHECK_THROWS_AS(sample_batch(ens, empty, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(sample_batch(ens, per, 1.0, rng), ConfigError);
  }
}

TEST_SUITE("integrity") {
  TEST_CASE("orthogonal lines in the plane") {
    const SubspaceEnsemble ens(2, {column({1, 0}), column({0, 1})});
    const auto batch = line_batch(ens);
    Rng rng(1);
    const auto g = rho_greedy(ens, batch.samples, batch.labels, 0, {}, rng);
    CHECK(g.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(std::abs(g.witness[1]) - 1.0) < 1e-9);
    CHECK(std::abs(g.witness[0]) < 1e-9);
    CHECK(rho_brute(ens, batch.samples, batch.labels, 0, 1) == 1.0);
    CHECK(rho_brute(ens, batch.samples, batch.labels, 0, 37) == 1.0);
  }

  TEST_CASE("lines at 45 degrees") {
    const double h = 1.0 / std::sqrt(2.0);
    const SubspaceEnsemble ens(3, {column({1, 0, 0}), column({h, h, 0})});
    const auto batch = line_batch(ens);
    Rng rng(2);
    const auto g = rho_greedy(ens, batch.samples, batch.labels, 0, {}, rng);
    CHECK(std::abs(g.value - h) < 1e-3);
    CHECK(std::abs(rho_brute(ens, batch.samples, batch.labels, 0, 400) - h) < 1e-4);
  }

  TEST_CASE("three coordinate axes") {
    const SubspaceEnsemble ens(3, {column({1, 0, 0}), column({0, 1, 0}), column({0, 0, 1})});
    const auto batch = line_batch(ens);
    const double brute = rho_brute(ens, batch.samples, batch.labels, 0, 400);
    CHECK(std::abs(brute - 1.0 / std::sqrt(2.0)) < 1e-4);
    Rng rng(3);
    CHECK(std::abs(rho_greedy(ens, batch.samples, batch.labels, 0, {}, rng).value -
                   1.0 / std::sqrt(2.0)) < 1e-3);
  }

  TEST_CASE("greedy agrees with brute force when the complement is small") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const std::size_t ranks[] = {1, 1, 1};
      const auto ens = generate_ensemble(3, ranks, rng);
      const std::size_t per[] = {6, 6, 6};
      const auto batch = sample_batch(ens, per, 0.05, rng, Orientation::kSphere);
      for (std::size_t k = 0; k < 3; ++k) {
        const double g = rho_greedy(ens, batch.samples, batch.labels, k, {}, rng).value;
        const double b = rho_brute(ens, batch.samples, batch.labels, k, 2000);
        // Independent oracle over the same plane.
        const Matrix comp = orthogonal_complement(ens.basis(k), 3);
        std::vector<double> a(3), c(3);
        for (std::size_t r = 0; r < 3; ++r) {
          a[r] = comp(r, 0);
          c[r] = comp(r, 1);
        }
        std::vector<double> data;
        for (std::size_t i = 0; i < batch.size(); ++i)
          if (batch.labels[i] != k)
            data.insert(data.end(), batch.samples.row(i).begin(), batch.samples.row(i).end());
        const double oracle = grid_max_min_2d(a, c, Matrix(data.size() / 3, 3, data), 4000);
        CAPTURE(seed);
        CHECK(std::abs(b - oracle) < 2e-3);
        CHECK(g <= b + 2e-3);
        CHECK(std::abs(g - b) < 0.05);
      }
    }
  }

  TEST_CASE("witness is orthogonal to its subspace") {
    Rng rng(6);
    const std::size_t ranks[] = {2, 2, 2};
    const auto ens = generate_ensemble(16, ranks, rng);
    const std::size_t per[] = {10, 10, 10};
    const auto batch = sample_batch(ens, per, 0.02, rng);
    const auto res = cluster_integrity(ens, batch, {}, rng);
    double mn = 1.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& u = res.witnesses[k];
      CHECK(std::abs(norm(u) - 1.0) < 1e-8);
      const Matrix proj = matmul(transpose(ens.basis(k)), Matrix(16, 1, u));
      CHECK(max_abs(proj) < 1e-8);
      mn = std::min(mn, res.per_cluster[k]);
    }
    CHECK(res.rho == mn);
    std::ostringstream csv;
    write_integrity_csv(csv, res);
    CHECK(csv.str().rfind("cluster,rho_k,iterations,u_0,", 0) == 0);
  }

  TEST_CASE("brute force rejects large complements and full subspaces") {
    Rng rng(7);
    const std::size_t ranks[] = {1, 1};
    const auto ens = generate_ensemble(8, ranks, rng);
    const std::size_t per[] = {3, 3};
    const auto batch = sample_batch(ens, per, 0.0, rng);
    CHECK_THROWS_AS(rho_brute(ens, batch.samples, batch.labels, 0, 10), UnsupportedError);
    const SubspaceEnsemble full(2, {Matrix::identity(2)});
    const Matrix x{{1, 0}};
    const std::size_t lab[] = {1};
    CHECK_THROWS_AS(greedy_max_min(full.basis(0), x, {}, rng), DegenerateError);
    CHECK_THROWS_AS(rho_greedy(full, x, lab, 0, {}, rng), DegenerateError);
  }
}

TEST_SUITE("noise bounds") {
  TEST_CASE("closed form") {
    auto b = noise_bounds(0.0, 0.9);
    CHECK(b.delta == 0.0);
    CHECK(b.Delta == doctest::Approx(0.9).epsilon(1e-15));
    b = noise_bounds(0.0, 1.0);
    CHECK(b.delta == 0.0);
    CHECK(b.Delta == 1.0);
    b = noise_bounds(0.02, 0.9);
    CHECK(std::abs(b.delta - 0.19899748742132399) < 1e-12);
    CHECK(std::abs(b.Delta - 0.79525900623119424) < 1e-12);
  }

  TEST_CASE("monotone on a grid") {
    for (int i = 0; i < 20; ++i) {
      const double rho = i / 19.0;
      for (int j = 0; j + 1 < 20; ++j) {
        const double e0 = j / 20.0, e1 = (j + 1) / 20.0;
        CHECK(noise_bounds(e1, rho).delta > noise_bounds(e0, rho).delta);
      }
    }
    for (int j = 0; j < 20; ++j) {
      const double eps = j / 20.0;
      for (int i = 0; i + 1 < 20; ++i) {
        CHECK(noise_bounds(eps, (i + 1) / 19.0).Delta >= noise_bounds(eps, i / 19.0).Delta);
      }
    }
  }

  TEST_CASE("fusion bound fields recompute") {
    const FusionBound b = make_fusion_bound(0.02, 0.9, 30, 10, 10);
    const double d = std::sqrt(1 - 0.98 * 0.98);
    const double D = 0.98 * 0.9 - std::sqrt((1 - 0.98 * 0.98) * (1 - 0.81));
    CHECK(std::abs(b.delta - d) < 1e-12);
    CHECK(std::abs(b.Delta - D) < 1e-12);
    CHECK(std::abs(b.ln_alpha - 10 * D * D) < 1e-12);
    CHECK(std::abs(b.ln_beta - (20 * d + 10 * d * d)) < 1e-12);
    CHECK(std::abs(b.ratio_bound - std::exp(30 * (d * d - D * D) + d) / 30) < 1e-12);
    CHECK(b.separable());
    CHECK_FALSE(make_fusion_bound(0.5, 0.5, 30, 10, 10).separable());
    CHECK_THROWS_AS(make_fusion_bound(0.1, 0.9, 10, 6, 6), ConfigError);
  }
}

TEST_SUITE("sharpness") {
  TEST_CASE("direct ratio and ideal case") {
    const std::size_t labels[] = {0, 0, 1, 1};
    Matrix a(4, 4, 0.1);
    a(0, 1) = a(1, 0) = a(2, 3) = a(3, 2) = 0.9;
    CHECK(sharpness(a, labels) == doctest::Approx(9.0));
    CHECK(sharpness(scale(a, 3.7), labels) == doctest::Approx(sharpness(a, labels)).epsilon(1e-14));

    Matrix block(4, 4);
    block(0, 1) = block(1, 0) = block(2, 3) = block(3, 2) = 0.5;
    CHECK(sharpness(block, labels) == kInfiniteSharpness);

    Matrix negative = a;
    negative(0, 1) = -0.2;
    CHECK(sharpness(negative, labels) == 0.0);
  }

  TEST_CASE("missing pair kinds are degenerate") {
    const std::size_t one_cluster[] = {0, 0, 0};
    CHECK_THROWS_AS(sharpness(Matrix(3, 3, 1.0), one_cluster), DegenerateError);
    const std::size_t singletons[] = {0, 1, 2};
    CHECK_THROWS_AS(sharpness(Matrix(3, 3, 1.0), singletons), DegenerateError);
  }
}

TEST_SUITE("construction") {
  TEST_CASE("axis-aligned hand case") {
    const SubspaceEnsemble ens(2, {column({1, 0}), column({0, 1})});
    const auto batch = batch_of(Matrix{{1, 0}, {1, 0}, {0, 1}}, {0, 0, 1});
    Rng rng(1);
    const auto w = construct_thm1_weights(ens, batch, signed_greedy(), rng);
    CHECK(max_abs_diff(w.weights, Matrix{{1, 1, 0}, {0, 0, 1}}) < 1e-12);
    const Matrix a = constructed_attention(batch.samples, w.weights);
    CHECK(max_abs_diff(a, Matrix{{2, 2, 0}, {2, 2, 0}, {0, 0, 1}}) < 1e-12);
    CHECK(sharpness(a, batch.labels) == kInfiniteSharpness);
    const auto check = check_block_structure(a, batch.labels, w.rho_hat);
    CHECK(check.max_cross_abs == 0.0);
    CHECK(check.holds());
  }

  TEST_CASE("noiseless random ensembles are block diagonal") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const Thm1Trial t = run_thm1_trial({}, seed);
      CAPTURE(seed);
      CHECK(t.max_cross_abs < 1e-9);
      CHECK(t.min_margin >= -1e-6);
      CHECK(t.holds);
    }
  }

  TEST_CASE("noisy pairwise bounds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const std::size_t ranks[] = {2, 2, 2};
      const auto ens = generate_ensemble(16, ranks, rng);
      const std::size_t per[] = {10, 10, 10};
      const auto batch = sample_batch(ens, per, 0.05, rng);
      const auto w = construct_thm1_weights(ens, batch, signed_greedy(), rng);
      const auto b = check_noisy_bounds(batch, w);
      CAPTURE(seed);
      CHECK(b.cross_pairs > 0);
      CHECK(b.cross_violations == 0);
      CHECK(b.corrected_violations == 0);
    }
  }

  TEST_CASE("cluster inside the span of the others") {
    // The only direction orthogonal to clusters 1 and 2 misses cluster 0 entirely.
    const double h = 1.0 / std::sqrt(2.0);
    const SubspaceEnsemble ens(3, {column({h, h, 0}), column({1, 0, 0}), column({0, 1, 0})});
    const auto batch = batch_of(Matrix{{h, h, 0}, {1, 0, 0}, {0, 1, 0}}, {0, 1, 2});
    Rng rng(1);
    const auto w = construct_thm1_weights(ens, batch, signed_greedy(), rng);
    CHECK(std::abs(w.cluster_rho[0]) < 1e-12);
    CHECK(std::abs(w.rho_hat) < 1e-12);
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("noiseless layers stay ideal") {
    Rng rng(3);
    const std::size_t ranks[] = {2, 2, 2};
    const auto ens = generate_ensemble(16, ranks, rng);
    const std::size_t per[] = {10, 10, 10};
    const auto batch = sample_batch(ens, per, 0.0, rng);
    const auto w = construct_thm1_weights(ens, batch, signed_greedy(), rng);
    for (bool residual : {false, true}) {
      FusionOptions opt;
      opt.residual = residual;
      const auto recs = fusion_iterate(batch, w.weights, 4, opt);
      REQUIRE(recs.size() == 4);
      for (const auto& r : recs) {
        CHECK(r.sharpness == kInfiniteSharpness);
        CHECK(r.attention.rows() == 30);
      }
      CHECK(sharpness_non_decreasing(recs));
    }
    CHECK_THROWS_AS(fusion_iterate(batch, w.weights, 0), ConfigError);
  }

  TEST_CASE("heavy noise still produces records") {
    Rng rng(4);
    const std::size_t ranks[] = {2, 2, 2};
    const auto ens = generate_ensemble(16, ranks, rng);
    const std::size_t per[] = {10, 10, 10};
    const auto batch = sample_batch(ens, per, 0.6, rng);
    const auto w = construct_thm1_weights(ens, batch, signed_greedy(), rng);
    const auto recs = fusion_iterate(batch, w.weights, 3);
    CHECK(recs.size() == 3);
    CHECK(recs[2].layer == 3);
  }

  TEST_CASE("records round trip") {
    Rng rng(5);
    std::vector<AffinityRecord> recs(2);
    for (std::size_t l = 0; l < 2; ++l) {
      recs[l].layer = l + 1;
      recs[l].attention = rng.normal_matrix(4, 4);
      recs[l].labels = {0, 0, 1, 1};
    }
    std::stringstream ss;
    write_records_csv(ss, recs);
    CHECK(ss.str().rfind("layer,i,j,value\n", 0) == 0);
    const auto back = read_records_csv(ss);
    REQUIRE(back.size() == 2);
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(back[l].layer == l + 1);
      CHECK(back[l].attention == recs[l].attention);
    }
  }
}
