#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tfusion/heads/head.hpp"
#include "tfusion/pipeline/config.hpp"
#include "tfusion/pipeline/data.hpp"
#include "tfusion/pipeline/encoder.hpp"
#include "tfusion/pipeline/metrics.hpp"

namespace tfusion::pipeline {

struct LossEntry {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 0-based within the epoch
  double loss = 0.0;
};

struct EpochRow {
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double mean_loss = 0.0;
  std::optional<MetricsReport> report;  // set on evaluation epochs
};

struct RunData {
  Dataset train;
  Dataset test;
  Dataset probe;  // stratified, drawn from the test split once
};

/// Builds the train/test/probe sets described by the config.
RunData prepare_data(const RunConfig& config, Rng& rng);
/// The data a training run with this config sees (same seed derivation).
RunData run_data(const RunConfig& config);

struct TrainResult {
  Encoder encoder;
  heads::ProjectionHead head;
  std::vector<EpochRow> history;
  std::vector<LossEntry> loss_log;
  MetricsReport final_report;  // report of the last epoch
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // artifacts are written when set
  std::ostream* progress = nullptr;              // one line per evaluated epoch
};

/// Self-supervised training of encoder and head on augmented view pairs.
/// Deterministic for a given config. On a non-finite loss the last good
/// parameters are checkpointed (when out_dir is set) and DivergenceError is thrown.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

/// Training loss of one batch of stacked view pairs.
Var contrastive_loss(const LossConfig& loss, Var head_output);

/// epoch,loss,unsup_acc,probe_acc,sharpness_l1..ld,align_l1..ld; one line per
/// evaluated epoch.
void write_metrics_csv(std::ostream& out, const std::vector<EpochRow>& history,
                       std::size_t attention_layers);
void write_loss_log(std::ostream& out, const std::vector<LossEntry>& log);

/// Checkpoint layout inside a run directory:
///   encoder.flab, head.manifest, head.flab, config.json
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config,
                     const Encoder& encoder, const heads::ProjectionHead& head);
Encoder load_encoder(const std::filesystem::path& dir, const RunConfig& config);

/// Attention records of an epoch: records/epoch_<e>.flab.
std::filesystem::path records_path(const std::filesystem::path& dir, std::size_t epoch);

}  // namespace tfusion::pipeline
