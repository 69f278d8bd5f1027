#include "tfusion/geometry/records_io.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

#include "tfusion/errors.hpp"
#include "tfusion/matrix_io.hpp"

namespace tfusion::geometry {

void write_records_csv(std::ostream& out, const std::vector<AffinityRecord>& records) {
  out << "layer,i,j,value\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.attention.rows(); ++i)
      for (std::size_t j = 0; j < r.attention.cols(); ++j)
        out << r.layer << ',' << i << ',' << j << ',' << format_double(r.attention(i, j)) << '\n';
  }
}

std::vector<AffinityRecord> read_records_csv(std::istream& in) {
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != "layer,i,j,value") {
    throw FormatError("attention CSV: missing header 'layer,i,j,value'", 0);
  }
  offset += line.size() + 1;
  std::map<std::size_t, std::vector<std::tuple<std::size_t, std::size_t, double>>> entries;
  while (std::getline(in, line)) {
    const std::size_t start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c, d;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',') ||
        !std::getline(ss, d)) {
      throw FormatError("attention CSV: expected 4 fields", start);
    }
    try {
      entries[std::stoul(a)].emplace_back(std::stoul(b), std::stoul(c), std::stod(d));
    } catch (const std::exception&) {
      throw FormatError("attention CSV: bad number in '" + line + "'", start);
    }
  }
  std::vector<AffinityRecord> out;
  for (auto& [layer, cells] : entries) {
    std::size_t rows = 0, cols = 0;
    for (const auto& [i, j, v] : cells) {
      rows = std::max(rows, i + 1);
      cols = std::max(cols, j + 1);
    }
    if (cells.size() != rows * cols) {
      throw FormatError("attention CSV: layer " + std::to_string(layer) + " is incomplete", offset);
    }
    AffinityRecord r;
    r.layer = layer;
    r.attention = Matrix(rows, cols);
    for (const auto& [i, j, v] : cells) r.attention(i, j) = v;
    out.push_back(std::move(r));
  }
  return out;
}

void save_records(const std::filesystem::path& path, const std::vector<AffinityRecord>& records) {
  std::vector<Matrix> ms;
  for (const auto& r : records) {
    ms.push_back(r.attention);
    Matrix labels(1, r.labels.size());
    for (std::size_t i = 0; i < r.labels.size(); ++i) labels(0, i) = static_cast<double>(r.labels[i]);
    ms.push_back(std::move(labels));
  }
  save_binary_list(path, ms);
}

std::vector<AffinityRecord> load_records(const std::filesystem::path& path) {
  const std::vector<Matrix> ms = load_binary_list(path);
  if (ms.size() % 2 != 0) throw FormatError("records file: odd matrix count", 0);
  std::vector<AffinityRecord> out;
  for (std::size_t k = 0; k < ms.size(); k += 2) {
    AffinityRecord r;
    r.layer = k / 2 + 1;
    r.attention = ms[k];
    for (double v : ms[k + 1].data()) r.labels.push_back(static_cast<std::size_t>(v));
    if (r.labels.size() == r.attention.rows()) {
      try {
        r.sharpness = sharpness(r.attention, r.labels);
      } catch (const DegenerateError&) {
        r.sharpness = std::nan("");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace tfusion::geometry
