#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tfusion/errors.hpp"
#include "tfusion/finite_diff.hpp"
#include "tfusion/losses/losses.hpp"
#include "tfusion/ops.hpp"
#include "tfusion/rng.hpp"

using namespace tfusion;
using namespace tfusion::losses;

namespace {

Matrix random_distribution_rows(Rng& rng, std::size_t n) {
  Matrix m = rng.uniform_matrix(n, n, 0.01, 1.0);
  return row_normalize(m);
}

Matrix nt_xent_gradient(const Matrix& z, const Matrix& pos, double tau) {
  Tape t;
  Var v = t.variable(z);
  return t.gradient(nt_xent(v, pos, tau), {v})[0];
}

Matrix kl_gradient(const Matrix& z, const TargetAffinity& target, double tau) {
  Tape t;
  Var v = t.variable(z);
  return t.gradient(kl_softmax_loss(cosine_affinity(v), target, tau), {v})[0];
}

double cosine(const Matrix& a, const Matrix& b) {
  return dot(a.data(), b.data()) / (norm(a.data()) * norm(b.data()));
}

}  // namespace

TEST_SUITE("target") {
  TEST_CASE("class labels") {
    const std::size_t labels[] = {0, 0, 1};
    const auto t = build_target(labels, false);
    CHECK(t.y == Matrix{{0, 1, 0}, {1, 0, 0}, {0, 0, 0}});
    CHECK_FALSE(t.row_normalized);
    CHECK(t.source == PositiveSource::kClassLabels);
  }

  TEST_CASE("augmentation pairs") {
    const auto t = build_pair_target(4, false);
    CHECK(t.y == Matrix{{0, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 1, 0}});
    CHECK(t.source == PositiveSource::kAugmentationPairs);
    CHECK_THROWS_AS(build_pair_target(5, false), ConfigError);
  }

  TEST_CASE("normalized rows are uniform over positives") {
    const std::size_t labels[] = {0, 0, 0};
    const auto t = build_target(labels, true);
    CHECK(t.y == Matrix{{0, 0.5, 0.5}, {0.5, 0, 0.5}, {0.5, 0.5, 0}});
  }

  TEST_CASE("singletons cannot be normalized") {
    const std::size_t labels[] = {0, 1, 2};
    CHECK_THROWS_AS(build_target(labels, true), DegenerateError);
    CHECK_NOTHROW(build_target(labels, false));
    const std::size_t one[] = {0};
    CHECK_THROWS_AS(build_target(one, false), ConfigError);
  }

  TEST_CASE("symmetric with zero diagonal") {
    Rng rng(1);
    std::vector<std::size_t> labels(12);
    for (auto& l : labels) l = rng.index(3);
    const Matrix y = build_target(labels, false).y;
    CHECK(y == transpose(y));
    for (std::size_t i = 0; i < 12; ++i) CHECK(y(i, i) == 0.0);
  }
}

TEST_SUITE("nt_xent") {
  TEST_CASE("single pair is zero") {
    const Matrix z{{1, 0}, {1, 0}};
    const Matrix pos = build_pair_target(2, false).y;
    for (double tau : {0.1, 0.2, 1.0, 5.0}) CHECK(nt_xent(z, pos, tau) == 0.0);
  }

  TEST_CASE("two pairs on orthogonal axes") {
    const Matrix z{{1, 0}, {1, 0}, {0, 1}, {0, 1}};
    const Matrix pos = build_pair_target(4, false).y;
    CHECK(std::abs(nt_xent(z, pos, 1.0) - std::log(1.0 + 2.0 / std::numbers::e)) < 1e-9);
  }

  TEST_CASE("row rescaling invariance") {
    Rng rng(2);
    const Matrix z = rng.normal_matrix(8, 5);
    Matrix scaled = z;
    for (std::size_t i = 0; i < 8; ++i)
      for (double& v : scaled.row(i)) v *= 0.3 + static_cast<double>(i);
    const Matrix pos = build_pair_target(8, false).y;
    CHECK(std::abs(nt_xent(z, pos) - nt_xent(scaled, pos)) < 1e-12);
  }

  TEST_CASE("errors") {
    const Matrix pos = build_pair_target(4, false).y;
    CHECK_THROWS_AS(nt_xent(Matrix{{1, 0}, {0, 0}, {0, 1}, {1, 1}}, pos), DegenerateError);
    CHECK_THROWS_AS(nt_xent(Matrix(4, 2, 1.0), pos, 0.0), ConfigError);
    CHECK_THROWS_AS(nt_xent(Matrix(4, 2, 1.0), Matrix(4, 4)), DegenerateError);
  }

  TEST_CASE("gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const Matrix z = rng.normal_matrix(6, 4);
      const Matrix pos = build_pair_target(6, false).y;
      const Matrix fd = finite_diff([&](const Matrix& m) { return nt_xent(m, pos, 0.5); }, z);
      CHECK(relative_error(nt_xent_gradient(z, pos, 0.5), fd) < 1e-4);
    }
  }
}

TEST_SUITE("g_normalize") {
  TEST_CASE("single off-diagonal mass") {
    const Matrix g = g_normalize(Matrix{{0, 2}, {2, 0}});
    CHECK(g(0, 0) <= 1e-10 / 4);
    CHECK(g(0, 0) > 0.0);
    CHECK(std::abs(g(0, 1) - (1.0 - g(0, 0))) < 1e-16);
  }

  TEST_CASE("signs are treated equally") {
    const Matrix g = g_normalize(Matrix{{0, 1, -1}, {1, 0, 1}, {-1, 1, 0}});
    CHECK(std::abs(g(0, 1) - 0.5) < 1e-9);
    CHECK(std::abs(g(0, 2) - 0.5) < 1e-9);
    CHECK(g(0, 0) < 1e-9);

    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = rng.normal_matrix(6, 6);
      CHECK(g_normalize(a) == g_normalize(scale(a, -1.0)));
    }
  }

  TEST_CASE("rows sum to one") {
    Rng rng(4);
    const Matrix g = g_normalize(rng.normal_matrix(7, 7));
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0.0;
      for (double v : g.row(i)) {
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(g_normalize(Matrix{{1}}), ConfigError);
    CHECK_THROWS_AS(g_normalize(Matrix(2, 3)), ShapeError);
  }
}

TEST_SUITE("jsd") {
  TEST_CASE("identical distributions") {
    Rng rng(5);
    const Matrix p = random_distribution_rows(rng, 5);
    CHECK(std::abs(jsd_divergence(p, p)) < 1e-9);
    const std::size_t labels[] = {0, 0, 1, 1};
    const auto target = build_target(labels, true);
    // An affinity whose normalized square is the target.
    const Matrix a{{0, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 1, 0}};
    CHECK(std::abs(jsd_loss(a, target)) < 1e-8);
  }

  TEST_CASE("disjoint supports reach 2 log 2 per row") {
    const Matrix p{{1, 0, 0}, {0, 0, 1}};
    const Matrix q{{0, 1, 0}, {0, 1, 0}};
    CHECK(std::abs(jsd_divergence(p, q) - 2.0 * std::log(2.0)) < 1e-8);
  }

  TEST_CASE("symmetric and nonnegative") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      const Matrix p = random_distribution_rows(rng, 6);
      const Matrix q = random_distribution_rows(rng, 6);
      for (auto mix : {Mixture::kHalf, Mixture::kListing}) {
        CHECK(jsd_divergence(p, q, mix) == jsd_divergence(q, p, mix));
      }
      CHECK(jsd_divergence(p, q) >= 0.0);
    }
  }

  TEST_CASE("positive rescaling of the affinity") {
    Rng rng(6);
    const std::size_t labels[] = {0, 0, 1, 1, 2, 2};
    const auto target = build_target(labels, true);
    const Matrix a = rng.normal_matrix(6, 6);
    const double base = jsd_loss(a, target);
    for (double c : {0.1, 0.5, 2.0, 10.0}) CHECK(std::abs(jsd_loss(scale(a, c), target) - base) < 1e-6);
  }

  TEST_CASE("unnormalized target is normalized first") {
    const std::size_t labels[] = {0, 0, 1, 1};
    Rng rng(7);
    const Matrix a = rng.normal_matrix(4, 4);
    CHECK(jsd_loss(a, build_target(labels, false)) == jsd_loss(a, build_target(labels, true)));
  }

  TEST_CASE("gradient matches finite differences") {
    const std::size_t labels[] = {0, 0, 1, 1, 2, 2};
    const auto target = build_target(labels, true);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const Matrix a = rng.uniform_matrix(6, 6, -1.0, 1.0);
      for (auto mix : {Mixture::kHalf, Mixture::kListing}) {
        Tape t;
        Var v = t.variable(a);
        const Matrix g = t.gradient(jsd_loss(v, target, mix), {v})[0];
        const Matrix fd = finite_diff([&](const Matrix& m) { return jsd_loss(m, target, mix); }, a);
        CHECK(relative_error(g, fd) < 1e-4);
      }
    }
  }
}

TEST_SUITE("kl_softmax") {
  TEST_CASE("uniform target against constant affinity") {
    const std::size_t labels[] = {0, 0, 0, 0, 0};
    const auto target = build_target(labels, true);
    CHECK(std::abs(kl_softmax_loss(Matrix(5, 5, 0.7), target)) < 1e-12);
  }

  TEST_CASE("matches nt_xent up to a constant") {
    const double tau = 0.2;
    const auto target = build_pair_target(8, true);
    const Matrix pos = build_pair_target(8, false).y;
    std::vector<double> gaps;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      const Matrix z = rng.normal_matrix(8, 5);
      gaps.push_back(kl_softmax_loss(cosine_affinity(z), target, tau) - nt_xent(z, pos, tau));
      CHECK(cosine(kl_gradient(z, target, tau), nt_xent_gradient(z, pos, tau)) >= 0.999);
    }
    double mean = 0.0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(gaps.size());
    double var = 0.0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    CHECK(std::sqrt(var / static_cast<double>(gaps.size())) < 1e-9);
  }

  TEST_CASE("gradient matches finite differences") {
    const std::size_t labels[] = {0, 0, 1, 1, 2, 2};
    const auto target = build_target(labels, true);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const Matrix a = rng.normal_matrix(6, 6);
      Tape t;
      Var v = t.variable(a);
      const Matrix g = t.gradient(kl_softmax_loss(v, target, 0.5), {v})[0];
      const Matrix fd =
          finite_diff([&](const Matrix& m) { return kl_softmax_loss(m, target, 0.5); }, a);
      CHECK(relative_error(g, fd) < 1e-4);
    }
  }
}
