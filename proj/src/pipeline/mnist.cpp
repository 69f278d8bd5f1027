#include "tfusion/pipeline/mnist.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "tfusion/errors.hpp"

namespace tfusion::pipeline {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t offset, const char* field) {
  if (offset + 4 > b.size()) {
    throw FormatError(std::string("truncated IDX header: missing ") + field, b.size());
  }
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void check_magic(const std::vector<std::uint8_t>& b, std::uint32_t expected) {
  const std::uint32_t magic = read_u32(b, 0, "magic");
  if (magic != expected) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08x, expected 0x%08x", magic, expected);
    throw FormatError(buf, 0);
  }
}

}  // namespace

IdxImages parse_idx_images(const std::vector<std::uint8_t>& b, std::size_t limit) {
  check_magic(b, kImageMagic);
  const std::size_t count = read_u32(b, 4, "image count");
  IdxImages out;
  out.rows = read_u32(b, 8, "row count");
  out.cols = read_u32(b, 12, "column count");
  const std::size_t pixels = out.rows * out.cols;
  if (pixels == 0) throw FormatError("IDX images with zero pixels per image", 8);
  const std::size_t n = limit == 0 ? count : std::min(limit, count);
  if (n == 0) throw FormatError("IDX image file holds no images", 4);
  const std::size_t need = 16 + n * pixels;
  if (b.size() < need) {
    throw FormatError("truncated IDX image data: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(b.size()),
                      b.size());
  }
  if (limit == 0 && b.size() != 16 + count * pixels) {
    throw FormatError("IDX image file has " + std::to_string(b.size() - need) + " trailing bytes",
                      need);
  }
  out.pixels = Matrix(n, pixels);
  for (std::size_t i = 0; i < n * pixels; ++i) out.pixels[i] = b[16 + i] / 255.0;
  return out;
}

std::vector<std::size_t> parse_idx_labels(const std::vector<std::uint8_t>& b, std::size_t limit) {
  check_magic(b, kLabelMagic);
  const std::size_t count = read_u32(b, 4, "label count");
  const std::size_t n = limit == 0 ? count : std::min(limit, count);
  if (b.size() < 8 + n) {
    throw FormatError("truncated IDX label data: need " + std::to_string(8 + n) + " bytes, have " +
                          std::to_string(b.size()),
                      b.size());
  }
  if (limit == 0 && b.size() != 8 + count) {
    throw FormatError("IDX label file has trailing bytes", 8 + count);
  }
  return std::vector<std::size_t>(b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset load_mnist(const std::string& images_path, const std::string& labels_path,
                   std::size_t limit) {
  const std::vector<std::uint8_t> image_bytes = read_file_bytes(images_path);
  const std::vector<std::uint8_t> label_bytes = read_file_bytes(labels_path);
  IdxImages images = parse_idx_images(image_bytes, limit);
  std::vector<std::size_t> labels = parse_idx_labels(label_bytes, limit);
  const std::size_t image_count = read_u32(image_bytes, 4, "image count");
  const std::size_t label_count = read_u32(label_bytes, 4, "label count");
  if (image_count != label_count) {
    throw FormatError(images_path + " holds " + std::to_string(image_count) + " images but " +
                          labels_path + " holds " + std::to_string(label_count) + " labels",
                      4);
  }
  return {std::move(images.pixels), std::move(labels)};
}

}  // namespace tfusion::pipeline
