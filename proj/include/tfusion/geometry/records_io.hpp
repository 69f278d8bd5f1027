#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "tfusion/geometry/fusion.hpp"

namespace tfusion::geometry {

// Long-format CSV, header `layer,i,j,value`, one line per entry, values at
// full precision. Several records may share one stream.
void write_records_csv(std::ostream& out, const std::vector<AffinityRecord>& records);
// Reads back attention matrices (labels and sharpness are not stored).
std::vector<AffinityRecord> read_records_csv(std::istream& in);

// Binary: the attention matrices back to back, plus a 1 x n label row, one
// pair per record, in layer order.
void save_records(const std::filesystem::path& path, const std::vector<AffinityRecord>& records);
std::vector<AffinityRecord> load_records(const std::filesystem::path& path);

}  // namespace tfusion::geometry
