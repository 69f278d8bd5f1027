#include "tfusion/errors.hpp"
#include "tfusion/losses/losses.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::losses {

namespace {

TargetAffinity finish(Matrix y, bool normalize, PositiveSource source) {
  TargetAffinity t;
  t.source = source;
  if (normalize) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double s = 0.0;
      for (double v : y.row(i)) s += v;
      if (s == 0.0) {
        throw DegenerateError("build_target: sample " + std::to_string(i) +
                              " has no positive partner; its row cannot be normalized");
      }
    }
    y = row_normalize(y);
  }
  t.y = std::move(y);
  t.row_normalized = normalize;
  return t;
}

}  // namespace

TargetAffinity build_target(std::span<const std::size_t> labels, bool normalize) {
  const std::size_t n = labels.size();
  if (n < 2) throw ConfigError("build_target: need at least 2 samples");
  Matrix y(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) = (i != j && labels[i] == labels[j]) ? 1.0 : 0.0;
  return finish(std::move(y), normalize, PositiveSource::kClassLabels);
}

std::vector<std::size_t> pair_labels(std::size_t n) {
  if (n % 2 != 0) throw ConfigError("pair_labels: view count must be even, got " + std::to_string(n));
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i / 2;
  return labels;
}

TargetAffinity build_pair_target(std::size_t n, bool normalize) {
  const std::vector<std::size_t> labels = pair_labels(n);
  TargetAffinity t = build_target(labels, normalize);
  t.source = PositiveSource::kAugmentationPairs;
  return t;
}

}  // namespace tfusion::losses
