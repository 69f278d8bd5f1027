#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tfusion/matrix.hpp"
#include "tfusion/pipeline/config.hpp"
#include "tfusion/rng.hpp"

namespace tfusion::pipeline {

struct Dataset {
  Matrix samples;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t classes() const;
};

struct Split {
  Dataset train;
  Dataset test;
};

/// Rows `indices` of `data`, in that order.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Per-class split: round(test_fraction * class size) samples of every class
/// (at least one) go to the test set. Order inside each part is shuffled.
Split split_dataset(const Dataset& data, double test_fraction, Rng& rng);

/// Clustered samples from a random subspace ensemble.
Dataset make_synthetic(const DataConfig& config, Rng& rng);

/// Two views of one sample: the sample is scaled to unit norm and each view is
/// an independent bounded rotation with cosine at least 1 - eps to it.
std::pair<std::vector<double>, std::vector<double>> augment(std::span<const double> x, double eps,
                                                            Rng& rng);

/// Views of rows `indices` of `samples`, stacked so that rows 2s and 2s+1 are
/// the two views of indices[s].
Matrix augment_batch(const Matrix& samples, std::span<const std::size_t> indices, double eps,
                     Rng& rng);

/// The first `per_class` rows of every class, in row order (fewer when a class is small).
std::vector<std::size_t> stratified_indices(std::span<const std::size_t> labels,
                                            std::size_t per_class);

}  // namespace tfusion::pipeline
