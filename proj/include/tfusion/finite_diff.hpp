#pragma once

#include <functional>

#include "tfusion/matrix.hpp"

namespace tfusion {

using ScalarFn = std::function<double(const Matrix&)>;

/// Central-difference gradient estimate of `f` at `at`, one entry at a time.
/// Throws NonFiniteError carrying the entry index if an evaluation is not finite.
Matrix finite_diff(const ScalarFn& f, const Matrix& at, double h = 1e-5);

/// max |a - b| divided by the largest magnitude in either matrix (floored at 1e-12).
/// This is the relative error used by every gradient check.
double relative_error(const Matrix& a, const Matrix& b);

}  // namespace tfusion
