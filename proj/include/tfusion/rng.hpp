#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tfusion/matrix.hpp"

namespace tfusion {

/// Seeded pseudo-random source. The engine is mt19937_64, whose output the
/// C++ standard fixes bit-for-bit; the real-valued draws below are derived
/// from it by hand rather than through <random> distributions, whose
/// algorithms vary between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the Box-Muller transform.
  double normal();

  /// Uniform integer in [0, n), rejection sampled.
  std::uint64_t index(std::uint64_t n);

  Matrix normal_matrix(std::size_t rows, std::size_t cols);
  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

  /// Unit vector uniform on the sphere in R^dim.
  std::vector<double> unit_vector(std::size_t dim);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Independent child generator; the parent stream advances by one draw.
  Rng split() { return Rng(next_u64() ^ 0x9E3779B97F4A7C15ull); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t position_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tfusion
