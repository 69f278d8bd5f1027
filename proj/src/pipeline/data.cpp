#include "tfusion/pipeline/data.hpp"

#include <algorithm>
#include <cmath>

#include "tfusion/errors.hpp"
#include "tfusion/geometry/subspace.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::pipeline {

std::size_t Dataset::classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DegenerateError("subset: no indices");
  Dataset out;
  out.samples = Matrix(indices.size(), data.samples.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= data.size()) throw ShapeError("subset: index " + std::to_string(i) + " out of range");
    std::copy(data.samples.row(i).begin(), data.samples.row(i).end(), out.samples.row(r).begin());
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

Split split_dataset(const Dataset& data, double test_fraction, Rng& rng) {
  if (data.samples.rows() != data.labels.size()) {
    throw ShapeError("split_dataset: " + std::to_string(data.labels.size()) + " labels for " +
                     std::to_string(data.samples.rows()) + " samples");
  }
  std::vector<std::size_t> train, test;
  for (std::size_t k = 0; k < data.classes(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.labels[i] == k) members.push_back(i);
    if (members.empty()) continue;
    rng.shuffle(members);
    std::size_t n_test = static_cast<std::size_t>(std::lround(test_fraction * members.size()));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() > 1 ? members.size() - 1 : 1);
    test.insert(test.end(), members.begin(), members.begin() + n_test);
    train.insert(train.end(), members.begin() + n_test, members.end());
  }
  rng.shuffle(train);
  rng.shuffle(test);
  return {subset(data, train), subset(data, test)};
}

Dataset make_synthetic(const DataConfig& config, Rng& rng) {
  const std::vector<std::size_t> ranks(config.clusters, config.rank);
  const geometry::SubspaceEnsemble ens = geometry::generate_ensemble(config.ambient_dim, ranks, rng);
  const std::vector<std::size_t> per(config.clusters, config.per_cluster);
  const geometry::ClusteredBatch batch =
      geometry::sample_batch(ens, per, config.noise, rng,
                             config.cone ? geometry::Orientation::kCone : geometry::Orientation::kSphere);
  return {batch.samples, batch.labels};
}

std::pair<std::vector<double>, std::vector<double>> augment(std::span<const double> x, double eps,
                                                            Rng& rng) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("augment: eps must be in [0,1)");
  const double len = norm(x);
  if (len == 0.0) throw DegenerateError("augment: zero sample");
  std::vector<double> unit(x.begin(), x.end());
  for (double& v : unit) v /= len;
  std::vector<double> a = geometry::perturb(unit, eps, rng);
  std::vector<double> b = geometry::perturb(unit, eps, rng);
  return {std::move(a), std::move(b)};
}

Matrix augment_batch(const Matrix& samples, std::span<const std::size_t> indices, double eps,
                     Rng& rng) {
  Matrix out(2 * indices.size(), samples.cols());
  for (std::size_t s = 0; s < indices.size(); ++s) {
    auto [a, b] = augment(samples.row(indices[s]), eps, rng);
    std::copy(a.begin(), a.end(), out.row(2 * s).begin());
    std::copy(b.begin(), b.end(), out.row(2 * s + 1).begin());
  }
  return out;
}

std::vector<std::size_t> stratified_indices(std::span<const std::size_t> labels,
                                            std::size_t per_class) {
  std::vector<std::size_t> taken;
  std::vector<std::size_t> count;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= count.size()) count.resize(labels[i] + 1, 0);
    if (count[labels[i]] < per_class) {
      ++count[labels[i]];
      taken.push_back(i);
    }
  }
  return taken;
}

}  // namespace tfusion::pipeline
