#include "tfusion/pipeline/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include "tfusion/errors.hpp"
#include "tfusion/geometry/records_io.hpp"
#include "tfusion/heads/checkpoint.hpp"
#include "tfusion/matrix_io.hpp"
#include "tfusion/pipeline/mnist.hpp"
#include "tfusion/pipeline/optimizer.hpp"

namespace tfusion::pipeline {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::vector<const Matrix*> all_parameters(const Encoder& encoder,
                                          const heads::ProjectionHead& head) {
  std::vector<const Matrix*> out = encoder.parameters();
  for (const Matrix* p : head.parameters()) out.push_back(p);
  return out;
}

std::vector<Matrix*> all_parameters(Encoder& encoder, heads::ProjectionHead& head) {
  std::vector<Matrix*> out = encoder.parameters();
  for (Matrix* p : head.parameters()) out.push_back(p);
  return out;
}

std::size_t attention_layers(const heads::ProjectionHead& head) {
  return head.kind == heads::HeadKind::kFfn ? 0 : head.depth();
}

void clip_gradients(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads)
    for (double v : g.data()) sq += v * v;
  const double total = std::sqrt(sq);
  if (total <= max_norm) return;
  const double f = max_norm / total;
  for (Matrix& g : grads)
    for (double& v : g.data()) v *= f;
}

void write_artifacts(const std::filesystem::path& dir, const RunConfig& config,
                     const TrainResult& r) {
  {
    std::ofstream out = open_out(dir / "metrics.csv");
    write_metrics_csv(out, r.history, attention_layers(r.head));
  }
  {
    std::ofstream out = open_out(dir / "loss_log.csv");
    write_loss_log(out, r.loss_log);
  }
  save_checkpoint(dir, config, r.encoder, r.head);
}

}  // namespace

RunData prepare_data(const RunConfig& config, Rng& rng) {
  const DataConfig& d = config.data;
  RunData data;
  if (d.source == DataSource::kSynthetic) {
    Split s = split_dataset(make_synthetic(d, rng), d.test_fraction, rng);
    data.train = std::move(s.train);
    data.test = std::move(s.test);
  } else {
    Dataset all = load_mnist(d.mnist_images, d.mnist_labels, d.limit);
    if (!d.mnist_test_images.empty()) {
      data.train = std::move(all);
      data.test = load_mnist(d.mnist_test_images, d.mnist_test_labels, d.limit);
    } else {
      Split s = split_dataset(all, d.test_fraction, rng);
      data.train = std::move(s.train);
      data.test = std::move(s.test);
    }
    if (data.train.samples.cols() != config.encoder_widths.front()) {
      throw ConfigError("encoder input width " + std::to_string(config.encoder_widths.front()) +
                        " does not match image size " +
                        std::to_string(data.train.samples.cols()));
    }
  }
  if (data.test.size() < 2) throw DegenerateError("test split needs at least 2 samples");
  const std::vector<std::size_t> idx =
      stratified_indices(data.test.labels, config.eval.probe_per_class);
  data.probe = subset(data.test, idx);
  return data;
}

RunData run_data(const RunConfig& config) {
  Rng root(config.seed);
  Rng data_rng = root.split();
  return prepare_data(config, data_rng);
}

Var contrastive_loss(const LossConfig& loss, Var z) {
  const std::size_t n = z.rows();
  switch (loss.kind) {
    case LossKind::kNtXent:
      return losses::nt_xent(z, losses::build_pair_target(n, false).y, loss.tau);
    case LossKind::kJsd:
      return losses::jsd_loss(losses::cosine_affinity(z), losses::build_pair_target(n, true),
                              loss.mixture);
    case LossKind::kKlSoftmax:
      return losses::kl_softmax_loss(losses::cosine_affinity(z),
                                     losses::build_pair_target(n, true), loss.tau);
  }
  throw UsageError("unknown loss kind");
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  Rng root(config.seed);
  Rng data_rng = root.split();
  Rng init_rng = root.split();
  Rng step_rng = root.split();

  const RunData data = prepare_data(config, data_rng);
  TrainResult r;
  r.encoder = init_encoder(config.encoder_widths, init_rng);
  r.head = heads::init_head(config.head, init_rng);

  if (options.out_dir) std::filesystem::create_directories(*options.out_dir / "records");

  const OptimizerConfig& opt = config.optimizer;
  const std::size_t per_step = opt.batch_size / 2;
  Sgd sgd(opt.momentum, opt.weight_decay);
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const EvalInputs eval_inputs{&data.train, &data.test, &data.probe,
                               config.eval.probe_train_fraction};

  // Parameters before the most recent step, restored when training diverges.
  std::vector<Matrix> last_good;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    const double lr = opt.schedule == Schedule::kCosine
                          ? cosine_learning_rate(epoch - 1, opt.epochs, opt.learning_rate,
                                                 opt.min_learning_rate)
                          : opt.learning_rate;
    step_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += per_step) {
      const std::size_t count = std::min(per_step, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, count);
      const Matrix views = augment_batch(data.train.samples, batch, config.data.aug_eps, step_rng);

      Tape tape;
      const std::vector<Var> params = heads::bind_parameters(
          tape, all_parameters(std::as_const(r.encoder), std::as_const(r.head)), true);
      const std::span<const Var> all(params);
      const std::vector<Matrix*> targets = all_parameters(r.encoder, r.head);
      auto diverged = [&](const char* what) {
        if (!last_good.empty())
          for (std::size_t k = 0; k < targets.size(); ++k) *targets[k] = last_good[k];
        std::string where;
        if (options.out_dir) {
          write_artifacts(*options.out_dir, config, r);
          where = "; last good parameters saved in " + options.out_dir->string();
        }
        return DivergenceError(std::string(what) + " at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(steps) + " (learning rate " +
                               format_double(lr) + ")" + where);
      };
      Var loss;
      try {
        const Var z = encode(all.subspan(0, 4), tape.constant(views));
        const Var out = heads::head_forward(r.head, all.subspan(4), z).output;
        loss = contrastive_loss(config.loss, out);
      } catch (const NonFiniteError&) {
        if (last_good.empty()) throw;
        throw diverged("forward pass became non-finite");
      } catch (const DegenerateError&) {
        if (last_good.empty()) throw;
        throw diverged("forward pass became non-finite");
      }
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) throw diverged("loss became non-finite");
      std::vector<Matrix> grads = tape.gradient(loss, all);
      if (opt.max_grad_norm > 0.0) clip_gradients(grads, opt.max_grad_norm);
      last_good.clear();
      for (const Matrix* p : targets) last_good.push_back(*p);
      sgd.step(targets, grads, lr);
      const bool finite = std::all_of(targets.begin(), targets.end(),
                                      [](const Matrix* p) { return p->all_finite(); });
      if (!finite) throw diverged("parameters became non-finite");
      r.loss_log.push_back({epoch, steps, value});
      loss_sum += value;
      ++steps;
    }
    if (steps == 0) throw DegenerateError("training set too small for one batch");

    EpochRow row{epoch, lr, loss_sum / static_cast<double>(steps), std::nullopt};
    if (epoch % config.eval.interval == 0 || epoch == opt.epochs) {
      MetricsReport report = evaluate(r.encoder, r.head, eval_inputs);
      report.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (options.out_dir && !report.records.empty()) {
        geometry::save_records(records_path(*options.out_dir, epoch), report.records);
      }
      if (options.progress) {
        *options.progress << "epoch " << epoch << " loss " << row.mean_loss << " unsup "
                          << report.unsupervised_accuracy << " probe " << report.probe_accuracy
                          << '\n';
      }
      row.report = std::move(report);
    }
    r.history.push_back(std::move(row));
  }
  r.final_report = *r.history.back().report;
  if (options.out_dir) write_artifacts(*options.out_dir, config, r);
  return r;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochRow>& history,
                       std::size_t layers) {
  out << "epoch,loss,unsup_acc,probe_acc";
  for (std::size_t l = 1; l <= layers; ++l) out << ",sharpness_l" << l;
  for (std::size_t l = 1; l <= layers; ++l) out << ",align_l" << l;
  out << '\n';
  for (const EpochRow& row : history) {
    if (!row.report) continue;
    const MetricsReport& m = *row.report;
    out << row.epoch << ',' << format_double(row.mean_loss) << ','
        << format_double(m.unsupervised_accuracy) << ',' << format_double(m.probe_accuracy);
    for (std::size_t l = 0; l < layers; ++l)
      out << ',' << (l < m.sharpness.size() ? format_double(m.sharpness[l]) : "nan");
    for (std::size_t l = 0; l < layers; ++l)
      out << ',' << (l < m.alignment.size() ? format_double(m.alignment[l]) : "nan");
    out << '\n';
  }
}

void write_loss_log(std::ostream& out, const std::vector<LossEntry>& log) {
  out << "epoch,step,loss\n";
  for (const LossEntry& e : log) out << e.epoch << ',' << e.step << ',' << format_double(e.loss) << '\n';
}

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config,
                     const Encoder& encoder, const heads::ProjectionHead& head) {
  std::filesystem::create_directories(dir);
  std::vector<Matrix> enc;
  for (const Matrix* p : encoder.parameters()) enc.push_back(*p);
  save_binary_list(dir / "encoder.flab", enc);
  heads::save_head(dir / "head", head, config.head, config.seed);
  std::ofstream out = open_out(dir / "config.json");
  out << to_json(config) << '\n';
}

Encoder load_encoder(const std::filesystem::path& dir, const RunConfig& config) {
  Rng rng(0);
  Encoder e = init_encoder(config.encoder_widths, rng);
  const std::vector<Matrix> values = load_binary_list(dir / "encoder.flab");
  const std::vector<Matrix*> slots = e.parameters();
  if (values.size() != slots.size()) throw FormatError("encoder checkpoint: wrong matrix count", 0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]->same_shape(values[i])) {
      throw FormatError("encoder checkpoint: matrix " + std::to_string(i) + " has shape " +
                            values[i].shape_string(),
                        0);
    }
    *slots[i] = values[i];
  }
  return e;
}

std::filesystem::path records_path(const std::filesystem::path& dir, std::size_t epoch) {
  return dir / "records" / ("epoch_" + std::to_string(epoch) + ".flab");
}

}  // namespace tfusion::pipeline
