#pragma once

// Plain (non-differentiable) dense kernels. The differentiable counterparts
// in tape.hpp forward to these.

#include <span>
#include <vector>

#include "tfusion/matrix.hpp"

namespace tfusion {

/// Floor added inside logarithms and row normalizations.
inline constexpr double kLogFloor = 1e-10;

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix divide(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix add_scalar(const Matrix& a, double c);
// Adds a 1 x cols row vector to every row.
Matrix add_row_broadcast(const Matrix& a, const Matrix& row);

Matrix relu(const Matrix& a);
Matrix square(const Matrix& a);
Matrix log(const Matrix& a);
Matrix exp(const Matrix& a);
// tanh approximation of GeLU.
Matrix gelu(const Matrix& a);
double gelu(double x);
double gelu_derivative(double x);

Matrix zero_diagonal(const Matrix& a);
Matrix row_sums(const Matrix& a);
Matrix column_sums(const Matrix& a);
double sum(const Matrix& a);

/// Divides each row by its sum. Rows summing to zero are a DegenerateError.
Matrix row_normalize(const Matrix& a);

/// Scales each row to unit Euclidean norm. Throws DegenerateError on a zero row.
Matrix row_l2_normalize(const Matrix& a);

/// Row-wise softmax with max subtraction. When mask_diagonal is set the
/// diagonal is excluded (its output is 0).
Matrix row_softmax(const Matrix& a, bool mask_diagonal = false);

/// Row-wise log-softmax. Masked diagonal entries are reported as 0.
Matrix row_log_softmax(const Matrix& a, bool mask_diagonal = false);

Matrix hconcat(std::span<const Matrix> blocks);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Orthonormal basis (as columns) of the column span of `a`, via twice-applied
/// modified Gram-Schmidt. Columns whose residual falls below `tol` are dropped.
Matrix orthonormal_columns(const Matrix& a, double tol = 1e-10);

/// Orthonormal basis (columns) of the orthogonal complement of the span of the
/// orthonormal columns of `basis` in R^ambient. Returns an empty matrix when
/// the complement is trivial.
Matrix orthogonal_complement(const Matrix& basis, std::size_t ambient);

/// v - B B^T v for orthonormal B.
std::vector<double> project_out(const Matrix& basis, std::span<const double> v);

}  // namespace tfusion
