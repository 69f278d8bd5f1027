#include "tfusion/pipeline/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tfusion/errors.hpp"
#include "tfusion/geometry/fusion.hpp"
#include "tfusion/ops.hpp"

namespace tfusion::pipeline {

double nearest_neighbor_accuracy(const Matrix& e, std::span<const std::size_t> labels) {
  const std::size_t n = e.rows();
  if (n < 2) throw DegenerateError("nearest neighbor accuracy needs at least 2 samples");
  if (labels.size() != n) throw ShapeError("nearest neighbor accuracy: label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = 0.0;
      for (std::size_t c = 0; c < e.cols(); ++c) {
        const double t = e(i, c) - e(j, c);
        d += t * t;
      }
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    if (arg < n && labels[arg] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double linear_probe_accuracy(const Matrix& train, std::span<const std::size_t> train_labels,
                             const Matrix& test, std::span<const std::size_t> test_labels,
                             const ProbeOptions& options) {
  if (train.rows() == 0 || test.rows() == 0) throw DegenerateError("linear probe: empty split");
  if (train.rows() != train_labels.size() || test.rows() != test_labels.size()) {
    throw ShapeError("linear probe: label count mismatch");
  }
  if (train.cols() != test.cols()) throw ShapeError("linear probe: feature widths differ");
  std::size_t classes = 0;
  for (std::size_t y : train_labels) classes = std::max(classes, y + 1);
  for (std::size_t y : test_labels) classes = std::max(classes, y + 1);

  const std::size_t n = train.rows();
  Matrix onehot(n, classes);
  for (std::size_t i = 0; i < n; ++i) onehot(i, train_labels[i]) = 1.0;
  Matrix w(train.cols(), classes);
  Matrix b(1, classes);
  const Matrix train_t = transpose(train);
  const double step = options.learning_rate / static_cast<double>(n);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const Matrix residual = sub(row_softmax(add_row_broadcast(matmul(train, w), b)), onehot);
    const Matrix gw = matmul(train_t, residual);
    const Matrix gb = column_sums(residual);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * gb[i];
  }
  const Matrix scores = add_row_broadcast(matmul(test, w), b);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.rows(); ++i) {
    const auto row = scores.row(i);
    const std::size_t pred =
        static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == test_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.rows());
}

double block_alignment(const Matrix& a, std::span<const std::size_t> labels) {
  const std::size_t n = a.rows();
  if (a.cols() != n || labels.size() != n) throw ShapeError("block_alignment: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double same = 0.0, all = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = std::max(a(i, j), 0.0);
      all += v;
      if (labels[j] == labels[i]) same += v;
    }
    if (all > 0.0) total += same / all;
  }
  return total / static_cast<double>(n);
}

MetricsReport evaluate(const Encoder& encoder, const heads::ProjectionHead& head,
                       const EvalInputs& in, const ProbeOptions& options) {
  if (!in.train || !in.test) throw UsageError("evaluate: missing train or test data");
  if (in.test->size() < 2) throw DegenerateError("evaluate: test set needs at least 2 samples");
  MetricsReport report;
  const Matrix test_emb = encode(encoder, in.test->samples);
  report.unsupervised_accuracy = nearest_neighbor_accuracy(test_emb, in.test->labels);

  const std::size_t n_probe = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(in.probe_train_fraction * in.train->size())));
  std::vector<std::size_t> idx(std::min(n_probe, in.train->size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Dataset probe_train = subset(*in.train, idx);
  report.probe_accuracy = linear_probe_accuracy(encode(encoder, probe_train.samples),
                                                probe_train.labels, test_emb, in.test->labels,
                                                options);

  if (in.probe && head.kind != heads::HeadKind::kFfn && head.depth() > 0) {
    const heads::HeadResult r =
        heads::head_forward(head, encode(encoder, in.probe->samples), in.probe->labels);
    for (const geometry::AffinityRecord& rec : r.records) {
      report.sharpness.push_back(rec.sharpness);
      report.alignment.push_back(block_alignment(rec.attention, rec.labels));
    }
    report.records = r.records;
  }
  return report;
}

}  // namespace tfusion::pipeline
