#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tfusion/heads/head.hpp"
#include "tfusion/pipeline/data.hpp"
#include "tfusion/pipeline/encoder.hpp"

namespace tfusion::pipeline {

/// Fraction of rows whose nearest other row (Euclidean; ties go to the lowest
/// index) carries the same label. Throws DegenerateError for fewer than 2 rows.
double nearest_neighbor_accuracy(const Matrix& embeddings, std::span<const std::size_t> labels);

struct ProbeOptions {
  std::size_t iterations = 500;
  double learning_rate = 1.0;
};

/// Softmax regression (one linear layer, zero-initialized, full-batch gradient
/// descent on cross-entropy) fit on the training rows; returns top-1 accuracy
/// on the test rows.
double linear_probe_accuracy(const Matrix& train, std::span<const std::size_t> train_labels,
                             const Matrix& test, std::span<const std::size_t> test_labels,
                             const ProbeOptions& options = {});

/// Mean over rows i of  sum_{j != i, same label} A_ij / sum_{j != i} A_ij.
/// Negative entries count as zero; rows without mass contribute 0.
double block_alignment(const Matrix& attention, std::span<const std::size_t> labels);

struct MetricsReport {
  double unsupervised_accuracy = 0.0;
  double probe_accuracy = 0.0;
  std::vector<double> sharpness;  // per head layer, on the probe batch
  std::vector<double> alignment;  // per head layer, on the probe batch
  std::vector<geometry::AffinityRecord> records;
  double wall_seconds = 0.0;
};

struct EvalInputs {
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  const Dataset* probe = nullptr;  // labeled batch fed through the head
  double probe_train_fraction = 0.1;
};

/// Unsupervised and probe accuracy use backbone embeddings (no head); the
/// attention statistics come from the head applied to the probe batch.
MetricsReport evaluate(const Encoder& encoder, const heads::ProjectionHead& head,
                       const EvalInputs& inputs, const ProbeOptions& options = {});

}  // namespace tfusion::pipeline
