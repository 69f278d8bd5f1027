#include "tfusion/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "tfusion/errors.hpp"
#include "tfusion/ops.hpp"

namespace tfusion {

Matrix finite_diff(const ScalarFn& f, const Matrix& at, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff: step must be positive");
  Matrix grad(at.rows(), at.cols());
  Matrix x = at;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double fp = f(x);
    x[k] = orig - h;
    const double fm = f(x);
    x[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NonFiniteError("finite_diff: non-finite evaluation at entry " + std::to_string(k), k);
    }
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({max_abs(a), max_abs(b), 1e-12});
  return max_abs_diff(a, b) / scale;
}

}  // namespace tfusion
