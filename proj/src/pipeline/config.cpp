#include "tfusion/pipeline/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tfusion/errors.hpp"

namespace tfusion::pipeline {

namespace {

using nlohmann::json;
using Setter = std::function<void(const json&)>;

void apply(const json& obj, const std::string& where, const std::map<std::string, Setter>& fields) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const auto f = fields.find(it.key());
    if (f == fields.end()) throw ConfigError(where + ": unknown field '" + it.key() + "'");
    try {
      f->second(it.value());
    } catch (const json::exception& e) {
      throw ConfigError(where + "." + it.key() + ": " + e.what());
    }
  }
}

template <typename T>
Setter set(T& target) {
  return [&target](const json& v) { target = v.get<T>(); };
}

Setter set_size(std::size_t& target) {
  return [&target](const json& v) {
    if (!v.is_number_unsigned()) throw ConfigError("expected a nonnegative integer, got " + v.dump());
    target = v.get<std::size_t>();
  };
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kNtXent: return "nt_xent";
    case LossKind::kJsd: return "jsd";
    case LossKind::kKlSoftmax: return "kl_softmax";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "nt_xent") return LossKind::kNtXent;
  if (s == "jsd") return LossKind::kJsd;
  if (s == "kl_softmax") return LossKind::kKlSoftmax;
  throw ConfigError("unknown loss '" + s + "' (expected nt_xent, jsd or kl_softmax)");
}

void validate(const RunConfig& c) {
  const DataConfig& d = c.data;
  if (d.source == DataSource::kSynthetic) {
    if (d.clusters < 2) throw ConfigError("data.clusters must be at least 2");
    if (d.rank == 0 || (d.clusters - 1) * d.rank >= d.ambient_dim) {
      throw ConfigError("data: need (clusters-1)*rank < ambient_dim");
    }
    if (d.per_cluster < 2) throw ConfigError("data.per_cluster must be at least 2");
    if (!(d.noise >= 0.0 && d.noise < 1.0)) throw ConfigError("data.noise must be in [0,1)");
  } else if (d.mnist_images.empty() || d.mnist_labels.empty()) {
    throw ConfigError("data: mnist source needs mnist_images and mnist_labels");
  }
  if (!(d.aug_eps >= 0.0 && d.aug_eps < 1.0)) throw ConfigError("data.aug_eps must be in [0,1)");
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction must be in (0,1)");
  }
  if (c.encoder_widths.size() != 3) throw ConfigError("encoder_widths must list 3 widths");
  for (std::size_t w : c.encoder_widths)
    if (w == 0) throw ConfigError("encoder_widths must be positive");
  if (d.source == DataSource::kSynthetic && c.encoder_widths.front() != d.ambient_dim) {
    throw ConfigError("encoder_widths[0] must equal data.ambient_dim");
  }
  if (c.head.dim != c.encoder_widths.back()) {
    throw ConfigError("head.dim must equal the last encoder width");
  }
  if (!(c.loss.tau > 0.0)) throw ConfigError("loss.tau must be positive");
  const OptimizerConfig& o = c.optimizer;
  if (o.batch_size < 4 || o.batch_size % 2 != 0) {
    throw ConfigError("optimizer.batch_size must be even and at least 4 (views come in pairs)");
  }
  if (o.epochs == 0) throw ConfigError("optimizer.epochs must be positive");
  if (!(o.learning_rate >= 0.0) || !(o.min_learning_rate >= 0.0)) {
    throw ConfigError("learning rates must be nonnegative");
  }
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) throw ConfigError("optimizer.momentum must be in [0,1)");
  if (!(o.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be nonnegative");
  if (!(o.max_grad_norm >= 0.0)) throw ConfigError("optimizer.max_grad_norm must be nonnegative");
  if (c.eval.interval == 0) throw ConfigError("eval.interval must be positive");
  if (c.eval.probe_per_class == 0) throw ConfigError("eval.probe_per_class must be positive");
  if (!(c.eval.probe_train_fraction > 0.0 && c.eval.probe_train_fraction <= 1.0)) {
    throw ConfigError("eval.probe_train_fraction must be in (0,1]");
  }
}

RunConfig parse_config_fields(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  DataConfig& d = c.data;
  heads::HeadConfig& h = c.head;
  std::string source, kind, mode, loss, mixture, schedule;
  bool head_dim_set = false;
  bool encoder_set = false;

  apply(root, "config",
        {
            {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
            {"encoder_widths",
             [&](const json& v) {
               c.encoder_widths = v.get<std::vector<std::size_t>>();
               encoder_set = true;
             }},
            {"data",
             [&](const json& v) {
               apply(v, "data",
                     {{"source", set(source)},
                      {"ambient_dim", set_size(d.ambient_dim)},
                      {"clusters", set_size(d.clusters)},
                      {"rank", set_size(d.rank)},
                      {"per_cluster", set_size(d.per_cluster)},
                      {"noise", set(d.noise)},
                      {"cone", set(d.cone)},
                      {"mnist_images", set(d.mnist_images)},
                      {"mnist_labels", set(d.mnist_labels)},
                      {"mnist_test_images", set(d.mnist_test_images)},
                      {"mnist_test_labels", set(d.mnist_test_labels)},
                      {"limit", set_size(d.limit)},
                      {"test_fraction", set(d.test_fraction)},
                      {"aug_eps", set(d.aug_eps)}});
             }},
            {"head",
             [&](const json& v) {
               apply(v, "head",
                     {{"kind", set(kind)},
                      {"dim",
                       [&](const json& x) {
                         set_size(h.dim)(x);
                         head_dim_set = true;
                       }},
                      {"ffn_widths", set(h.ffn_widths)},
                      {"depth", set_size(h.depth)},
                      {"heads", set_size(h.heads)},
                      {"ffn_hidden", set_size(h.ffn_hidden)},
                      {"mode", set(mode)},
                      {"residual", set(h.residual)}});
             }},
            {"loss",
             [&](const json& v) {
               apply(v, "loss",
                     {{"kind", set(loss)}, {"tau", set(c.loss.tau)}, {"mixture", set(mixture)}});
             }},
            {"optimizer",
             [&](const json& v) {
               OptimizerConfig& o = c.optimizer;
               apply(v, "optimizer",
                     {{"learning_rate", set(o.learning_rate)},
                      {"min_learning_rate", set(o.min_learning_rate)},
                      {"momentum", set(o.momentum)},
                      {"weight_decay", set(o.weight_decay)},
                      {"max_grad_norm", set(o.max_grad_norm)},
                      {"epochs", set_size(o.epochs)},
                      {"batch_size", set_size(o.batch_size)},
                      {"scheduler", set(schedule)}});
             }},
            {"eval",
             [&](const json& v) {
               apply(v, "eval",
                     {{"probe_per_class", set_size(c.eval.probe_per_class)},
                      {"probe_train_fraction", set(c.eval.probe_train_fraction)},
                      {"interval", set_size(c.eval.interval)}});
             }},
        });

  if (!source.empty()) {
    if (source == "synthetic") d.source = DataSource::kSynthetic;
    else if (source == "mnist") d.source = DataSource::kMnist;
    else throw ConfigError("data.source must be synthetic or mnist, got '" + source + "'");
  }
  if (d.source == DataSource::kMnist && !encoder_set) c.encoder_widths.front() = 784;
  if (!kind.empty()) h.kind = heads::parse_head_kind(kind);
  if (!mode.empty()) h.mode = heads::parse_attention_mode(mode);
  if (!head_dim_set) h.dim = c.encoder_widths.empty() ? 0 : c.encoder_widths.back();
  if (!loss.empty()) c.loss.kind = parse_loss_kind(loss);
  if (!mixture.empty()) {
    if (mixture == "half") c.loss.mixture = losses::Mixture::kHalf;
    else if (mixture == "listing") c.loss.mixture = losses::Mixture::kListing;
    else throw ConfigError("loss.mixture must be half or listing, got '" + mixture + "'");
  }
  if (!schedule.empty()) {
    if (schedule == "cosine") c.optimizer.schedule = Schedule::kCosine;
    else if (schedule == "constant") c.optimizer.schedule = Schedule::kConstant;
    else throw ConfigError("optimizer.scheduler must be cosine or constant, got '" + schedule + "'");
  }
  return c;
}

RunConfig parse_config(const std::string& text) {
  RunConfig c = parse_config_fields(text);
  validate(c);
  return c;
}

std::string read_config_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_config(const std::string& path) { return parse_config(read_config_text(path)); }

std::string to_json(const RunConfig& c) {
  const DataConfig& d = c.data;
  const OptimizerConfig& o = c.optimizer;
  json j;
  j["seed"] = c.seed;
  j["encoder_widths"] = c.encoder_widths;
  j["data"] = {{"source", d.source == DataSource::kSynthetic ? "synthetic" : "mnist"},
               {"ambient_dim", d.ambient_dim},
               {"clusters", d.clusters},
               {"rank", d.rank},
               {"per_cluster", d.per_cluster},
               {"noise", d.noise},
               {"cone", d.cone},
               {"mnist_images", d.mnist_images},
               {"mnist_labels", d.mnist_labels},
               {"mnist_test_images", d.mnist_test_images},
               {"mnist_test_labels", d.mnist_test_labels},
               {"limit", d.limit},
               {"test_fraction", d.test_fraction},
               {"aug_eps", d.aug_eps}};
  j["head"] = {{"kind", heads::to_string(c.head.kind)},
               {"dim", c.head.dim},
               {"ffn_widths", c.head.ffn_widths},
               {"depth", c.head.depth},
               {"heads", c.head.heads},
               {"ffn_hidden", c.head.ffn_hidden},
               {"mode", heads::to_string(c.head.mode)},
               {"residual", c.head.residual}};
  j["loss"] = {{"kind", to_string(c.loss.kind)},
               {"tau", c.loss.tau},
               {"mixture", c.loss.mixture == losses::Mixture::kHalf ? "half" : "listing"}};
  j["optimizer"] = {{"learning_rate", o.learning_rate},
                    {"min_learning_rate", o.min_learning_rate},
                    {"momentum", o.momentum},
                    {"weight_decay", o.weight_decay},
                    {"max_grad_norm", o.max_grad_norm},
                    {"epochs", o.epochs},
                    {"batch_size", o.batch_size},
                    {"scheduler", o.schedule == Schedule::kCosine ? "cosine" : "constant"}};
  j["eval"] = {{"probe_per_class", c.eval.probe_per_class},
               {"probe_train_fraction", c.eval.probe_train_fraction},
               {"interval", c.eval.interval}};
  return j.dump(2);
}

}  // namespace tfusion::pipeline
