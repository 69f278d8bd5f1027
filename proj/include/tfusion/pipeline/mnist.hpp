#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tfusion/pipeline/data.hpp"

namespace tfusion::pipeline {

// IDX containers, big-endian:
//   images: 0x00000803 | u32 count | u32 rows | u32 cols | count*rows*cols u8
//   labels: 0x00000801 | u32 count | count u8
// Malformed input raises FormatError carrying the byte offset of the problem.

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix pixels;  // count x (rows*cols), scaled to [0, 1]
};

/// `limit` = 0 reads every record; otherwise at most `limit`.
IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes, std::size_t limit = 0);
std::vector<std::size_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes,
                                          std::size_t limit = 0);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

/// Parses an image file and its label file; counts must agree.
Dataset load_mnist(const std::string& images_path, const std::string& labels_path,
                   std::size_t limit = 0);

}  // namespace tfusion::pipeline
