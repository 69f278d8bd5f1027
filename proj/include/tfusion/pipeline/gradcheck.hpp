#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tfusion::pipeline {

struct GradCheck {
  std::string name;
  std::uint64_t seed = 0;
  double relative_error = 0.0;  // worst over every checked operand
};

/// Tape gradients against central differences for every loss, the encoder
/// and every head variant, on small random problems drawn from `seed`.
std::vector<GradCheck> gradient_suite(std::uint64_t seed);

}  // namespace tfusion::pipeline
