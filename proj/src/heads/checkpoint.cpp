#include "tfusion/heads/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tfusion/errors.hpp"
#include "tfusion/matrix_io.hpp"

namespace tfusion::heads {

namespace {

std::filesystem::path with_suffix(std::filesystem::path stem, const char* suffix) {
  stem += suffix;
  return stem;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("manifest: bad integer for '" + key + "': " + v);
  }
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("manifest: line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_manifest(std::ostream& out, const HeadConfig& config, std::uint64_t seed) {
  out << "kind=" << to_string(config.kind) << '\n';
  out << "dims=";
  if (config.kind == HeadKind::kFfn && !config.ffn_widths.empty()) {
    for (std::size_t i = 0; i < config.ffn_widths.size(); ++i)
      out << (i ? "," : "") << config.ffn_widths[i];
  } else {
    out << config.dim;
  }
  out << '\n';
  out << "depth=" << config.depth << '\n';
  out << "heads=" << config.heads << '\n';
  out << "seed=" << seed << '\n';
  out << "mode=" << to_string(config.mode) << '\n';
  out << "residual=" << (config.residual ? "on" : "off") << '\n';
  out << "ffn_hidden=" << config.ffn_hidden << '\n';
}

HeadConfig read_manifest(std::istream& in, std::uint64_t* seed) {
  const auto kv = parse_key_values(in);
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("manifest: missing key '" + key + "'");
    return it->second;
  };
  HeadConfig c;
  c.kind = parse_head_kind(get("kind"));
  std::vector<std::size_t> dims;
  std::stringstream ss(get("dims"));
  std::string tok;
  while (std::getline(ss, tok, ',')) dims.push_back(to_size("dims", tok));
  if (dims.empty()) throw ConfigError("manifest: empty dims");
  c.dim = dims.front();
  if (c.kind == HeadKind::kFfn && dims.size() > 1) c.ffn_widths = dims;
  c.depth = to_size("depth", get("depth"));
  c.heads = to_size("heads", get("heads"));
  if (seed) *seed = to_size("seed", get("seed"));
  if (kv.count("mode")) c.mode = parse_attention_mode(kv.at("mode"));
  if (kv.count("residual")) c.residual = kv.at("residual") == "on";
  if (kv.count("ffn_hidden")) c.ffn_hidden = to_size("ffn_hidden", kv.at("ffn_hidden"));
  return c;
}

void assign_parameters(ProjectionHead& head, const std::vector<Matrix>& values) {
  const std::vector<Matrix*> slots = head.parameters();
  if (slots.size() != values.size()) {
    throw FormatError("checkpoint holds " + std::to_string(values.size()) +
                      " matrices, head expects " + std::to_string(slots.size()), 0);
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]->same_shape(values[i])) {
      throw FormatError("checkpoint matrix " + std::to_string(i) + " has shape " +
                        values[i].shape_string() + ", expected " + slots[i]->shape_string(), 0);
    }
    *slots[i] = values[i];
  }
}

void save_head(const std::filesystem::path& stem, const ProjectionHead& head,
               const HeadConfig& config, std::uint64_t seed) {
  {
    std::ofstream out(with_suffix(stem, ".manifest"));
    if (!out) throw Error("cannot write " + with_suffix(stem, ".manifest").string());
    write_manifest(out, config, seed);
  }
  std::vector<Matrix> values;
  for (const Matrix* p : head.parameters()) values.push_back(*p);
  save_binary_list(with_suffix(stem, ".flab"), values);
}

ProjectionHead load_head(const std::filesystem::path& stem, HeadConfig* config) {
  std::ifstream in(with_suffix(stem, ".manifest"));
  if (!in) throw Error("cannot open " + with_suffix(stem, ".manifest").string());
  std::uint64_t seed = 0;
  const HeadConfig c = read_manifest(in, &seed);
  Rng rng(seed);
  ProjectionHead head = init_head(c, rng);
  const std::filesystem::path bin = with_suffix(stem, ".flab");
  if (!head.parameters().empty()) assign_parameters(head, load_binary_list(bin));
  if (config) *config = c;
  return head;
}

}  // namespace tfusion::heads
