#include "tfusion/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tfusion/errors.hpp"

namespace tfusion {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

template <typename F>
Matrix zip(const Matrix& a, const Matrix& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(od[i], bd[i]);
  return out;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t cols = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = out.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Matrix sub(const Matrix& a, const Matrix& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Matrix hadamard(const Matrix& a, const Matrix& b) {
  return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}
Matrix divide(const Matrix& a, const Matrix& b) {
  return zip(a, b, "divide", [](double x, double y) { return x / y; });
}
Matrix scale(const Matrix& a, double c) {
  return map(a, [c](double x) { return x * c; });
}
Matrix add_scalar(const Matrix& a, double c) {
  return map(a, [c](double x) { return x + c; });
}

Matrix add_row_broadcast(const Matrix& a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row_broadcast: expected 1x" + std::to_string(a.cols()) + " row, got " +
                     row.shape_string());
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += row(0, j);
  return out;
}

Matrix relu(const Matrix& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Matrix square(const Matrix& a) {
  return map(a, [](double x) { return x * x; });
}
Matrix log(const Matrix& a) {
  return map(a, [](double x) { return std::log(x); });
}
Matrix exp(const Matrix& a) {
  return map(a, [](double x) { return std::exp(x); });
}

double gelu(double x) {
  const double inner = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

Matrix gelu(const Matrix& a) {
  return map(a, [](double x) { return gelu(x); });
}

Matrix zero_diagonal(const Matrix& a) {
  Matrix out = a;
  const std::size_t n = std::min(a.rows(), a.cols());
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 0.0;
  return out;
}

Matrix row_sums(const Matrix& a) {
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += v;
    out(i, 0) = s;
  }
  return out;
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
  return out;
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

Matrix row_normalize(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += v;
    if (s == 0.0) throw DegenerateError("row_normalize: row " + std::to_string(i) + " sums to zero");
    for (double& v : out.row(i)) v /= s;
  }
  return out;
}

Matrix row_l2_normalize(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double n = norm(a.row(i));
    if (n == 0.0) {
      throw DegenerateError("row_l2_normalize: row " + std::to_string(i) + " has zero norm");
    }
    for (double& v : out.row(i)) v /= n;
  }
  return out;
}

Matrix row_softmax(const Matrix& a, bool mask_diagonal) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (mask_diagonal && i == j) continue;
      mx = std::max(mx, a(i, j));
    }
    if (!std::isfinite(mx)) {
      throw DegenerateError("row_softmax: row " + std::to_string(i) + " has no finite entry");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (mask_diagonal && i == j) continue;
      const double e = std::exp(a(i, j) - mx);
      out(i, j) = e;
      s += e;
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= s;
  }
  return out;
}

Matrix row_log_softmax(const Matrix& a, bool mask_diagonal) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (mask_diagonal && i == j) continue;
      mx = std::max(mx, a(i, j));
    }
    if (!std::isfinite(mx)) {
      throw DegenerateError("row_log_softmax: row " + std::to_string(i) + " has no finite entry");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (mask_diagonal && i == j) continue;
      s += std::exp(a(i, j) - mx);
    }
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(i, j) = (mask_diagonal && i == j) ? 0.0 : a(i, j) - lse;
    }
  }
  return out;
}

Matrix hconcat(std::span<const Matrix> blocks) {
  if (blocks.empty()) throw ShapeError("hconcat: no blocks");
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) {
      throw ShapeError("hconcat: row mismatch " + blocks.front().shape_string() + " vs " +
                       b.shape_string());
    }
    cols += b.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, offset + j) = b(i, j);
    offset += b.cols();
  }
  return out;
}

double frobenius_norm(const Matrix& a) { return norm(a.data()); }

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Matrix orthonormal_columns(const Matrix& a, double tol) {
  std::vector<std::vector<double>> kept;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    std::vector<double> v(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) v[r] = a(r, c);
    const double original = norm(v);
    if (original == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : kept) {
        const double p = dot(q, v);
        for (std::size_t r = 0; r < v.size(); ++r) v[r] -= p * q[r];
      }
    }
    const double n = norm(v);
    if (n <= tol * std::max(1.0, original)) continue;
    for (double& x : v) x /= n;
    kept.push_back(std::move(v));
  }
  if (kept.empty()) return {};
  Matrix out(a.rows(), kept.size());
  for (std::size_t c = 0; c < kept.size(); ++c)
    for (std::size_t r = 0; r < a.rows(); ++r) out(r, c) = kept[c][r];
  return out;
}

Matrix orthogonal_complement(const Matrix& basis, std::size_t ambient) {
  const std::size_t r = basis.empty() ? 0 : basis.cols();
  if (!basis.empty() && basis.rows() != ambient) {
    throw ShapeError("orthogonal_complement: basis has " + std::to_string(basis.rows()) +
                     " rows, ambient dimension is " + std::to_string(ambient));
  }
  if (r >= ambient) return {};
  Matrix stacked(ambient, r + ambient);
  for (std::size_t i = 0; i < ambient; ++i) {
    for (std::size_t j = 0; j < r; ++j) stacked(i, j) = basis(i, j);
    stacked(i, r + i) = 1.0;
  }
  const Matrix q = orthonormal_columns(stacked, 1e-8);
  if (q.empty() || q.cols() <= r) return {};
  Matrix out(ambient, q.cols() - r);
  for (std::size_t i = 0; i < ambient; ++i)
    for (std::size_t j = r; j < q.cols(); ++j) out(i, j - r) = q(i, j);
  return out;
}

std::vector<double> project_out(const Matrix& basis, std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  if (basis.empty()) return out;
  if (basis.rows() != v.size()) throw ShapeError("project_out: dimension mismatch");
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t c = 0; c < basis.cols(); ++c) {
      double p = 0.0;
      for (std::size_t r = 0; r < basis.rows(); ++r) p += basis(r, c) * out[r];
      for (std::size_t r = 0; r < basis.rows(); ++r) out[r] -= p * basis(r, c);
    }
  }
  return out;
}

}  // namespace tfusion
