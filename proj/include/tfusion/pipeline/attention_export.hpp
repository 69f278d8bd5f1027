#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "tfusion/geometry/fusion.hpp"

namespace tfusion::pipeline {

/// Plain PGM ("P2", maxval 255). Entries are scaled linearly from [min, max]
/// to [0, 255] and rounded; a constant matrix maps to all zeros.
void write_pgm(std::ostream& out, const Matrix& m);

struct Pgm {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
  std::vector<int> pixels;  // row-major
};
Pgm read_pgm(std::istream& in);

/// One layer_<l>.pgm and one layer_<l>.csv (raw values) per record. When a
/// layer holds several records (one per head) the files are named
/// layer_<l>_head_<h>. Returns the written paths.
std::vector<std::filesystem::path> export_attention(
    const std::vector<geometry::AffinityRecord>& records, const std::filesystem::path& dir);

}  // namespace tfusion::pipeline
