#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "tfusion/heads/head.hpp"

namespace tfusion::heads {

/// Text manifest, one `key=value` per line:
///   kind, dims (comma-separated widths), depth, heads, seed, mode, residual, ffn_hidden
void write_manifest(std::ostream& out, const HeadConfig& config, std::uint64_t seed);
HeadConfig read_manifest(std::istream& in, std::uint64_t* seed = nullptr);

std::map<std::string, std::string> parse_key_values(std::istream& in);

/// `<stem>.manifest` plus `<stem>.flab` holding the parameters in declaration order.
void save_head(const std::filesystem::path& stem, const ProjectionHead& head,
               const HeadConfig& config, std::uint64_t seed);
ProjectionHead load_head(const std::filesystem::path& stem, HeadConfig* config = nullptr);

/// Copies `values` into the parameter slots of `head`, checking shapes.
void assign_parameters(ProjectionHead& head, const std::vector<Matrix>& values);

}  // namespace tfusion::heads
