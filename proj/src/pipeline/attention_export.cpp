#include "tfusion/pipeline/attention_export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "tfusion/errors.hpp"
#include "tfusion/matrix_io.hpp"

namespace tfusion::pipeline {

void write_pgm(std::ostream& out, const Matrix& m) {
  if (m.empty()) throw ShapeError("write_pgm: empty matrix");
  if (!m.all_finite()) throw NonFiniteError("write_pgm: non-finite entry", m.first_non_finite());
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  const double min = *lo;
  const double range = *hi - *lo;
  out << "P2\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const int v = range > 0.0 ? static_cast<int>(std::lround(255.0 * (m(r, c) - min) / range)) : 0;
      out << (c ? " " : "") << v;
    }
    out << '\n';
  }
}

Pgm read_pgm(std::istream& in) {
  // Tokens may be separated by any whitespace; '#' starts a comment.
  auto next = [&in]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(in, rest);
    }
    throw FormatError("truncated PGM", static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())));
  };
  auto number = [&](const char* what) {
    const std::string tok = next();
    try {
      std::size_t pos = 0;
      const long v = std::stol(tok, &pos);
      if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw FormatError(std::string("bad PGM ") + what + " '" + tok + "'", 0);
    }
  };
  if (next() != "P2") throw FormatError("PGM magic is not P2", 0);
  Pgm p;
  p.width = number("width");
  p.height = number("height");
  p.maxval = number("maxval");
  p.pixels.reserve(p.width * p.height);
  for (std::size_t i = 0; i < p.width * p.height; ++i) {
    const std::size_t v = number("pixel");
    if (v > p.maxval) throw FormatError("PGM pixel exceeds maxval", 0);
    p.pixels.push_back(static_cast<int>(v));
  }
  return p;
}

std::vector<std::filesystem::path> export_attention(
    const std::vector<geometry::AffinityRecord>& records, const std::filesystem::path& dir) {
  if (records.empty()) throw DegenerateError("export_attention: no records");
  std::filesystem::create_directories(dir);
  std::map<std::size_t, std::size_t> per_layer;
  for (const auto& r : records) ++per_layer[r.layer];
  std::map<std::size_t, std::size_t> seen;
  std::vector<std::filesystem::path> written;
  for (const auto& r : records) {
    std::string stem = "layer_" + std::to_string(r.layer);
    const std::size_t h = seen[r.layer]++;
    if (per_layer[r.layer] > 1) stem += "_head_" + std::to_string(h + 1);
    for (const char* ext : {".pgm", ".csv"}) {
      const std::filesystem::path path = dir / (stem + ext);
      std::ofstream out(path);
      if (!out) throw Error("cannot write " + path.string());
      if (std::string(ext) == ".pgm") write_pgm(out, r.attention);
      else write_csv(out, r.attention);
      if (!out) throw Error("write failed for " + path.string());
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace tfusion::pipeline
