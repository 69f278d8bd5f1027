#include "tfusion/matrix_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tfusion/errors.hpp"

namespace tfusion {

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'L', 'A', 'B'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("truncated matrix file while reading ") + what,
                        offset_ + static_cast<std::size_t>(in_.gcount()));
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> b{};
    read(reinterpret_cast<char*>(b.data()), 4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }

  double f64() {
    std::array<unsigned char, 8> b{};
    read(reinterpret_cast<char*>(b.data()), 8, "values");
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
    return std::bit_cast<double>(bits);
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

Matrix read_one(Reader& r) {
  const std::size_t start = r.offset();
  std::array<char, 4> magic{};
  r.read(magic.data(), 4, "magic");
  if (magic != kMagic) throw FormatError("bad matrix magic", start);
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  if (rows == 0 || cols == 0) throw FormatError("matrix with zero dimension", start + 4);
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (double& v : data) v = r.f64();
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

void write_binary(std::ostream& out, const Matrix& m) {
  if (m.empty()) throw ShapeError("write_binary: empty matrix");
  out.write(kMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) put_f64(out, v);
}

Matrix read_binary(std::istream& in) {
  Reader r(in);
  return read_one(r);
}

void save_binary(const std::filesystem::path& path, const Matrix& m) {
  save_binary_list(path, {m});
}

Matrix load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_binary(in);
}

void save_binary_list(const std::filesystem::path& path, const std::vector<Matrix>& ms) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& m : ms) write_binary(out, m);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<Matrix> load_binary_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Reader r(in);
  std::vector<Matrix> out;
  while (!r.at_eof()) out.push_back(read_one(r));
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

Matrix read_csv(std::istream& in) {
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw FormatError("bad CSV number '" + cell + "'", line_start);
      data.push_back(v);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw FormatError("ragged CSV row", line_start);
    ++rows;
  }
  if (rows == 0) throw FormatError("empty CSV", 0);
  return Matrix(rows, cols, std::move(data));
}

}  // namespace tfusion
