#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfusion/heads/head.hpp"
#include "tfusion/losses/losses.hpp"

namespace tfusion::pipeline {

enum class DataSource { kSynthetic, kMnist };
enum class LossKind { kNtXent, kJsd, kKlSoftmax };
enum class Schedule { kConstant, kCosine };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  // synthetic
  std::size_t ambient_dim = 32;
  std::size_t clusters = 3;
  std::size_t rank = 4;
  std::size_t per_cluster = 300;
  double noise = 0.05;
  bool cone = true;  // cone sampling; false draws from the whole sphere
  // mnist
  std::string mnist_images;
  std::string mnist_labels;
  std::string mnist_test_images;
  std::string mnist_test_labels;
  std::size_t limit = 0;  // 0 means all
  // both
  double test_fraction = 0.2;
  double aug_eps = 0.1;
};

struct LossConfig {
  LossKind kind = LossKind::kNtXent;
  double tau = losses::kDefaultTemperature;
  losses::Mixture mixture = losses::Mixture::kHalf;
};

struct OptimizerConfig {
  double learning_rate = 0.03;
  double min_learning_rate = 0.0;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  double max_grad_norm = 1.0;  // global gradient-norm clip; 0 disables
  std::size_t epochs = 100;
  std::size_t batch_size = 128;  // views per step; two per source sample
  Schedule schedule = Schedule::kCosine;
};

struct EvalConfig {
  std::size_t probe_per_class = 8;
  double probe_train_fraction = 0.1;
  std::size_t interval = 1;  // epochs between evaluations; the last epoch is always evaluated
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  std::vector<std::size_t> encoder_widths{32, 64, 32};
  heads::HeadConfig head;
  LossConfig loss;
  OptimizerConfig optimizer;
  EvalConfig eval;
};

/// Throws ConfigError on a violated invariant.
void validate(const RunConfig& config);

/// JSON object with the same field names as the structs above. Missing keys
/// keep their defaults; unknown keys are a ConfigError.
RunConfig parse_config(const std::string& json_text);
/// Key and type checks only; the invariants of validate() are not enforced.
RunConfig parse_config_fields(const std::string& json_text);
RunConfig load_config(const std::string& path);
/// File contents; ConfigError when it cannot be opened.
std::string read_config_text(const std::string& path);
std::string to_json(const RunConfig& config);

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& s);

}  // namespace tfusion::pipeline
