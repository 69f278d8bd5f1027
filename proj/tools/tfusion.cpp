// Command-line front end: data generation, geometry checks, training,
// evaluation and attention export.
//
// Exit codes: 0 success, 1 failed check or runtime failure, 2 usage or
// configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfusion/errors.hpp"
#include "tfusion/geometry/integrity.hpp"
#include "tfusion/geometry/records_io.hpp"
#include "tfusion/geometry/verify.hpp"
#include "tfusion/heads/checkpoint.hpp"
#include "tfusion/matrix_io.hpp"
#include "tfusion/pipeline/attention_export.hpp"
#include "tfusion/pipeline/gradcheck.hpp"
#include "tfusion/pipeline/train.hpp"

namespace fs = std::filesystem;
using namespace tfusion;

namespace {

constexpr const char* kVersion = "0.1.0";

geometry::EnsembleMode parse_ensemble_mode(const std::string& s) {
  if (s == "random") return geometry::EnsembleMode::kRandom;
  if (s == "axis-aligned") return geometry::EnsembleMode::kAxisAligned;
  throw ConfigError("unknown ensemble mode '" + s + "'");
}

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigError("expected on or off, got '" + s + "'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// Geometry subcommands and gradcheck accept the run config format. Only keys
// present in the file are applied, and flags given on the command line win.

struct ConfigFile {
  nlohmann::json json;
  const CLI::App* cmd = nullptr;

  template <class T>
  void take(const char* section, const char* key, const char* flag, T& dst) const {
    if (cmd->count(flag) > 0) return;
    const nlohmann::json* node = &json;
    if (section) {
      if (!json.contains(section)) return;
      node = &json.at(section);
    }
    if (node->contains(key)) dst = node->at(key).get<T>();
  }

  void take_orientation(std::string& dst) const {
    bool cone = dst == "cone";
    take("data", "cone", "--orientation", cone);
    dst = cone ? "cone" : "sphere";
  }
};

std::optional<ConfigFile> read_config_file(const std::string& path, const CLI::App* cmd) {
  if (path.empty()) return std::nullopt;
  const std::string text = pipeline::read_config_text(path);
  pipeline::parse_config_fields(text);  // rejects unknown keys and wrong types
  return ConfigFile{nlohmann::json::parse(text), cmd};
}

template <class Args>
void apply_shape(const ConfigFile& f, Args& a) {
  f.take(nullptr, "seed", "--seed", a.seed);
  f.take("data", "ambient_dim", "--m", a.m);
  f.take("data", "clusters", "--k", a.k);
  f.take("data", "rank", "--rank", a.rank);
  f.take("data", "per_cluster", "--per-cluster", a.per_cluster);
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config;
  std::size_t m = 16, k = 3, rank = 2, per_cluster = 10;
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::string ensemble = "random";
  std::string orientation = "cone";
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  Rng rng(a.seed);
  const std::vector<std::size_t> ranks(a.k, a.rank);
  const auto ens = geometry::generate_ensemble(a.m, ranks, rng, parse_ensemble_mode(a.ensemble));
  if (a.orientation != "cone" && a.orientation != "sphere") {
    throw ConfigError("orientation must be cone or sphere");
  }
  const std::vector<std::size_t> per(a.k, a.per_cluster);
  const auto batch = geometry::sample_batch(
      ens, per, a.eps, rng,
      a.orientation == "cone" ? geometry::Orientation::kCone : geometry::Orientation::kSphere);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "samples.csv");
    write_csv(out, batch.samples);
  }
  {
    auto out = open_out(dir / "labels.csv");
    for (std::size_t y : batch.labels) out << y << '\n';
  }
  save_binary(dir / "samples.flab", batch.samples);
  save_binary_list(dir / "bases.flab", ens.bases());
  std::cout << "wrote " << batch.size() << " samples in R^" << a.m << " from " << a.k
            << " subspaces to " << dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct RhoArgs {
  std::string config;
  std::size_t m = 4, k = 2, rank = 1, per_cluster = 20, restarts = 8, iterations = 500;
  std::size_t brute = 0;
  double eps = 0.0, step = 0.1;
  std::uint64_t seed = 0;
  std::string mode = "random";
  std::string orientation = "sphere";
  std::string csv;
};

int run_rho(const RhoArgs& a) {
  Rng rng(a.seed);
  const std::vector<std::size_t> ranks(a.k, a.rank);
  const auto ens = geometry::generate_ensemble(a.m, ranks, rng, parse_ensemble_mode(a.mode));
  const std::vector<std::size_t> per(a.k, a.per_cluster);
  const auto batch = geometry::sample_batch(
      ens, per, a.eps, rng,
      a.orientation == "cone" ? geometry::Orientation::kCone : geometry::Orientation::kSphere);
  geometry::GreedyOptions opt;
  opt.restarts = a.restarts;
  opt.max_iterations = a.iterations;
  opt.step = a.step;
  const auto result = geometry::cluster_integrity(ens, batch, opt, rng);
  for (std::size_t c = 0; c < result.per_cluster.size(); ++c) {
    std::printf("cluster %zu: rho_k=%.6f", c, result.per_cluster[c]);
    if (a.brute > 0) {
      std::printf(" brute=%.6f",
                  geometry::rho_brute(ens, batch.samples, batch.labels, c, a.brute));
    }
    std::printf("\n");
  }
  std::printf("ρ=%.6f\n", result.rho);
  if (!a.csv.empty()) {
    auto out = open_out(a.csv);
    geometry::write_integrity_csv(out, result);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string config;
  std::size_t m = 16, k = 3, rank = 2, per_cluster = 10, seeds = 10, layers = 4;
  double eps = 0.02;
  double min_monotone = 0.9;
  std::uint64_t seed = 0;
  std::string residual = "off";
};

int run_verify_thm1(const VerifyArgs& a) {
  const geometry::TrialShape shape{a.m, a.k, a.rank, a.per_cluster};
  std::size_t failed = 0;
  for (std::uint64_t s = a.seed; s < a.seed + a.seeds; ++s) {
    const auto t = geometry::run_thm1_trial(shape, s);
    std::printf(
        "seed %llu: rho_hat=%.6f off-block max|A|=%.3e in-block min A=%.6f nu*rho_hat^2=%.6f %s\n",
        static_cast<unsigned long long>(s), t.rho_hat, t.max_cross_abs, t.min_same, t.min_bound,
        t.holds ? "ok" : "FAIL");
    if (!t.holds) ++failed;
  }
  std::printf("%zu/%zu seeds satisfy the block-diagonal bounds\n", a.seeds - failed, a.seeds);
  return failed == 0 ? 0 : 1;
}

int run_verify_thm2(const VerifyArgs& a) {
  const geometry::TrialShape shape{a.m, a.k, a.rank, a.per_cluster};
  const bool residual = parse_on_off(a.residual);
  std::size_t bound_failures = 0, monotone = 0;
  for (std::uint64_t s = a.seed; s < a.seed + a.seeds; ++s) {
    const auto t = geometry::run_thm2_trial(shape, a.eps, a.layers, residual, s);
    std::printf("seed %llu: rho_hat=%.6f delta=%.6f Delta=%.6f sharpness:",
                static_cast<unsigned long long>(s), t.rho_hat, t.delta, t.Delta);
    for (double v : t.sharpness) std::printf(" %.6g", v);
    std::printf(" %s; cross-bound violations %zu/%zu, in-block violations %zu/%zu (uncorrected form %zu)\n",
                t.non_decreasing ? "non-decreasing" : "DECREASES", t.bounds.cross_violations,
                t.bounds.cross_pairs, t.bounds.corrected_violations, t.bounds.same_pairs,
                t.bounds.alpha_violations);
    if (!t.bounds_hold()) ++bound_failures;
    if (t.non_decreasing) ++monotone;
  }
  const bool monotone_ok = static_cast<double>(monotone) >= a.min_monotone * static_cast<double>(a.seeds);
  std::printf("sharpness non-decreasing on %zu/%zu seeds (required fraction %.2f); %zu seeds violate a pairwise bound\n",
              monotone, a.seeds, a.min_monotone, bound_failures);
  return bound_failures == 0 && monotone_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out, loss, mode, residual, head;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau, eps, lr;
  std::optional<std::size_t> layers, epochs;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  pipeline::RunConfig c = a.config.empty() ? pipeline::RunConfig{} : pipeline::load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (!a.loss.empty()) c.loss.kind = pipeline::parse_loss_kind(a.loss);
  if (a.tau) c.loss.tau = *a.tau;
  if (!a.mode.empty()) c.head.mode = heads::parse_attention_mode(a.mode);
  if (!a.residual.empty()) c.head.residual = parse_on_off(a.residual);
  if (!a.head.empty()) c.head.kind = heads::parse_head_kind(a.head);
  if (a.layers) c.head.depth = *a.layers;
  if (a.eps) c.data.aug_eps = *a.eps;
  if (a.lr) c.optimizer.learning_rate = *a.lr;
  if (a.epochs) c.optimizer.epochs = *a.epochs;
  pipeline::validate(c);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(pipeline::to_json(c));
    manifest["seed"] = c.seed;
    manifest["version"] = kVersion;
    manifest["compiler"] = __VERSION__;
    auto out = open_out(dir / "run_manifest.json");
    out << manifest.dump(2) << '\n';
  }
  pipeline::TrainOptions opt;
  opt.out_dir = dir;
  if (!a.quiet) opt.progress = &std::cout;
  const auto r = pipeline::train(c, opt);
  const auto& m = r.final_report;
  std::printf("final: unsup_acc=%.4f probe_acc=%.4f", m.unsupervised_accuracy, m.probe_accuracy);
  if (!m.alignment.empty()) {
    std::printf(" align:");
    for (double v : m.alignment) std::printf(" %.4f", v);
  }
  std::printf(" (%.1fs)\nartifacts in %s\n", m.wall_seconds, dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

pipeline::RunConfig load_run_config(const fs::path& run) {
  const fs::path path = run / "config.json";
  if (!fs::is_regular_file(path)) throw Error("cannot open run config " + path.string());
  return pipeline::load_config(path.string());
}

int run_eval(const std::string& run_dir) {
  const fs::path run(run_dir);
  const pipeline::RunConfig c = load_run_config(run);
  const pipeline::Encoder enc = pipeline::load_encoder(run, c);
  const heads::ProjectionHead head = heads::load_head(run / "head");
  const pipeline::RunData data = pipeline::run_data(c);
  const pipeline::EvalInputs in{&data.train, &data.test, &data.probe, c.eval.probe_train_fraction};
  const auto m = pipeline::evaluate(enc, head, in);
  std::printf("unsup_acc=%.6f\nprobe_acc=%.6f\n", m.unsupervised_accuracy, m.probe_accuracy);
  for (std::size_t l = 0; l < m.alignment.size(); ++l) {
    std::printf("layer %zu: sharpness=%.6g align=%.6f\n", l + 1, m.sharpness[l], m.alignment[l]);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int run_gradcheck(std::uint64_t seed, std::size_t seeds, double tol) {
  std::size_t failed = 0;
  for (std::uint64_t s = seed; s < seed + seeds; ++s) {
    for (const auto& g : pipeline::gradient_suite(s)) {
      const bool ok = g.relative_error < tol;
      if (!ok) ++failed;
      std::printf("seed %llu %-40s rel_err=%.3e %s\n", static_cast<unsigned long long>(s),
                  g.name.c_str(), g.relative_error, ok ? "ok" : "FAIL");
    }
  }
  return failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

int run_attention_maps(const std::string& run_dir, const std::string& epoch_arg,
                       const std::string& out_arg) {
  const fs::path run(run_dir);
  std::size_t epoch = 0;
  if (epoch_arg == "last") {
    const fs::path records = run / "records";
    if (!fs::is_directory(records)) throw Error("no attention records in " + records.string());
    for (const auto& entry : fs::directory_iterator(records)) {
      const std::string name = entry.path().stem().string();
      if (name.rfind("epoch_", 0) == 0) epoch = std::max<std::size_t>(epoch, std::stoul(name.substr(6)));
    }
    if (epoch == 0) throw Error("no attention records in " + records.string());
  } else {
    try {
      epoch = std::stoul(epoch_arg);
    } catch (const std::exception&) {
      throw ConfigError("--epoch must be a number or 'last'");
    }
  }
  const auto records = geometry::load_records(pipeline::records_path(run, epoch));
  const fs::path out = out_arg.empty() ? run / "attention" / ("epoch_" + std::to_string(epoch))
                                       : fs::path(out_arg);
  for (const auto& p : pipeline::export_attention(records, out)) std::cout << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble geometry, ReLU-attention projection heads and contrastive training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "Sample points from a random subspace ensemble");
  cmd_gen->add_option("--config", gen.config, "JSON run configuration");
  cmd_gen->add_option("--m", gen.m, "Ambient dimension");
  cmd_gen->add_option("--k", gen.k, "Number of subspaces");
  cmd_gen->add_option("--rank", gen.rank, "Rank of every subspace");
  cmd_gen->add_option("--per-cluster", gen.per_cluster, "Samples per subspace");
  cmd_gen->add_option("--eps", gen.eps, "Noise level in [0,1)");
  cmd_gen->add_option("--seed", gen.seed, "Random seed");
  cmd_gen->add_option("--ensemble", gen.ensemble, "random or axis-aligned");
  cmd_gen->add_option("--orientation", gen.orientation, "cone or sphere");
  cmd_gen->add_option("--out", gen.out, "Output directory")->required();

  RhoArgs rho;
  auto* cmd_rho = app.add_subcommand("rho", "Estimate cluster integrity by greedy search");
  cmd_rho->add_option("--config", rho.config, "JSON run configuration");
  cmd_rho->add_option("--m", rho.m, "Ambient dimension");
  cmd_rho->add_option("--k", rho.k, "Number of subspaces");
  cmd_rho->add_option("--rank", rho.rank, "Rank of every subspace");
  cmd_rho->add_option("--per-cluster", rho.per_cluster, "Samples per subspace");
  cmd_rho->add_option("--eps", rho.eps, "Noise level in [0,1)");
  cmd_rho->add_option("--seed", rho.seed, "Random seed");
  cmd_rho->add_option("--mode", rho.mode, "random or axis-aligned");
  cmd_rho->add_option("--orientation", rho.orientation, "cone or sphere");
  cmd_rho->add_option("--restarts", rho.restarts, "Greedy restarts");
  cmd_rho->add_option("--iterations", rho.iterations, "Greedy iterations per restart");
  cmd_rho->add_option("--step", rho.step, "Greedy step size");
  cmd_rho->add_option("--brute", rho.brute, "Also run the grid oracle at this resolution");
  cmd_rho->add_option("--csv", rho.csv, "Write per-cluster results here");

  VerifyArgs v1;
  auto* cmd_v1 = app.add_subcommand("verify-thm1", "Check the noiseless block-diagonal construction");
  cmd_v1->add_option("--config", v1.config, "JSON run configuration");
  cmd_v1->add_option("--m", v1.m, "Ambient dimension");
  cmd_v1->add_option("--k", v1.k, "Number of subspaces");
  cmd_v1->add_option("--rank", v1.rank, "Rank of every subspace");
  cmd_v1->add_option("--per-cluster", v1.per_cluster, "Samples per subspace");
  cmd_v1->add_option("--seeds", v1.seeds, "Number of seeds");
  cmd_v1->add_option("--seed", v1.seed, "First seed");

  VerifyArgs v2;
  auto* cmd_v2 = app.add_subcommand("verify-thm2", "Check noisy bounds and sharpness across layers");
  cmd_v2->add_option("--config", v2.config, "JSON run configuration");
  cmd_v2->add_option("--m", v2.m, "Ambient dimension");
  cmd_v2->add_option("--k", v2.k, "Number of subspaces");
  cmd_v2->add_option("--rank", v2.rank, "Rank of every subspace");
  cmd_v2->add_option("--per-cluster", v2.per_cluster, "Samples per subspace");
  cmd_v2->add_option("--seeds", v2.seeds, "Number of seeds");
  cmd_v2->add_option("--seed", v2.seed, "First seed");
  cmd_v2->add_option("--eps", v2.eps, "Noise level in [0,1)");
  cmd_v2->add_option("--layers", v2.layers, "Number of fusion layers");
  cmd_v2->add_option("--residual", v2.residual, "on or off");
  cmd_v2->add_option("--min-monotone", v2.min_monotone,
                     "Fraction of seeds whose sharpness must not decrease");

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Contrastive training run");
  cmd_train->add_option("--config", tr.config, "JSON run configuration");
  cmd_train->add_option("--out", tr.out, "Run directory")->required();
  cmd_train->add_option("--seed", tr.seed, "Random seed");
  cmd_train->add_option("--loss", tr.loss, "nt_xent, jsd or kl_softmax");
  cmd_train->add_option("--tau", tr.tau, "Temperature");
  cmd_train->add_option("--mode", tr.mode, "equation or code-listing");
  cmd_train->add_option("--residual", tr.residual, "on or off");
  cmd_train->add_option("--head", tr.head, "ffn, transfusion or transformer");
  cmd_train->add_option("--layers", tr.layers, "Head depth");
  cmd_train->add_option("--eps", tr.eps, "Augmentation noise level");
  cmd_train->add_option("--lr", tr.lr, "Initial learning rate");
  cmd_train->add_option("--epochs", tr.epochs, "Number of epochs");
  cmd_train->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");

  std::string eval_run;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a finished run");
  cmd_eval->add_option("--run", eval_run, "Run directory")->required();

  std::string gc_config;
  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 1;
  double gc_tol = 1e-4;
  auto* cmd_gc = app.add_subcommand("gradcheck", "Compare tape gradients with finite differences");
  cmd_gc->add_option("--config", gc_config, "JSON run configuration");
  cmd_gc->add_option("--seed", gc_seed, "First seed");
  cmd_gc->add_option("--seeds", gc_seeds, "Number of seeds");
  cmd_gc->add_option("--tol", gc_tol, "Largest accepted relative error");

  std::string am_run, am_epoch = "last", am_out;
  auto* cmd_am = app.add_subcommand("attention-maps", "Export recorded attention as PGM and CSV");
  cmd_am->add_option("--run", am_run, "Run directory")->required();
  cmd_am->add_option("--epoch", am_epoch, "Epoch number or 'last'");
  cmd_am->add_option("--out", am_out, "Output directory (default <run>/attention/epoch_<e>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\nrun with --help for usage\n";
    return 2;
  }

  try {
    if (const auto f = read_config_file(gen.config, cmd_gen)) {
      apply_shape(*f, gen);
      f->take("data", "noise", "--eps", gen.eps);
      f->take_orientation(gen.orientation);
    }
    if (const auto f = read_config_file(rho.config, cmd_rho)) {
      apply_shape(*f, rho);
      f->take("data", "noise", "--eps", rho.eps);
      f->take_orientation(rho.orientation);
    }
    if (const auto f = read_config_file(v1.config, cmd_v1)) apply_shape(*f, v1);
    if (const auto f = read_config_file(v2.config, cmd_v2)) {
      apply_shape(*f, v2);
      f->take("data", "noise", "--eps", v2.eps);
      f->take("head", "depth", "--layers", v2.layers);
      if (cmd_v2->count("--residual") == 0) {
        bool residual = v2.residual == "on";
        f->take("head", "residual", "--residual", residual);
        v2.residual = residual ? "on" : "off";
      }
    }
    if (const auto f = read_config_file(gc_config, cmd_gc)) f->take(nullptr, "seed", "--seed", gc_seed);

    if (*cmd_gen) return run_gen_data(gen);
    if (*cmd_rho) return run_rho(rho);
    if (*cmd_v1) return run_verify_thm1(v1);
    if (*cmd_v2) return run_verify_thm2(v2);
    if (*cmd_train) return run_train(tr);
    if (*cmd_eval) return run_eval(eval_run);
    if (*cmd_gc) return run_gradcheck(gc_seed, gc_seeds, gc_tol);
    if (*cmd_am) return run_attention_maps(am_run, am_epoch, am_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
