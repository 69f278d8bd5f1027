#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfusion/matrix.hpp"

namespace tfusion {

// Binary layout, little-endian:
//   "FLAB" | u32 rows | u32 cols | rows*cols f64, row-major
void write_binary(std::ostream& out, const Matrix& m);
Matrix read_binary(std::istream& in);

void save_binary(const std::filesystem::path& path, const Matrix& m);
Matrix load_binary(const std::filesystem::path& path);

// Several matrices back to back in one file.
void save_binary_list(const std::filesystem::path& path, const std::vector<Matrix>& ms);
std::vector<Matrix> load_binary_list(const std::filesystem::path& path);

// Comma-separated grid, one matrix row per line, every value printed with %.17g.
void write_csv(std::ostream& out, const Matrix& m);
Matrix read_csv(std::istream& in);

std::string format_double(double v);

}  // namespace tfusion
