#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tfusion/errors.hpp"
#include "tfusion/matrix_io.hpp"
#include "tfusion/ops.hpp"
#include "tfusion/pipeline/attention_export.hpp"
#include "tfusion/pipeline/config.hpp"
#include "tfusion/pipeline/data.hpp"
#include "tfusion/pipeline/encoder.hpp"
#include "tfusion/pipeline/gradcheck.hpp"
#include "tfusion/pipeline/metrics.hpp"
#include "tfusion/pipeline/mnist.hpp"
#include "tfusion/pipeline/optimizer.hpp"
#include "tfusion/pipeline/train.hpp"

using namespace tfusion;
using namespace tfusion::pipeline;
namespace fs = std::filesystem;

namespace {

const std::string kData = TFUSION_TEST_DATA;

RunConfig tiny_config() {
  RunConfig c;
  c.seed = 11;
  c.data.ambient_dim = 8;
  c.data.rank = 2;
  c.data.per_cluster = 20;
  c.encoder_widths = {8, 16, 8};
  c.head.dim = 8;
  c.head.depth = 2;
  c.optimizer.epochs = 2;
  c.optimizer.batch_size = 16;
  return c;
}

std::vector<std::uint8_t> bytes_of(const std::string& path) { return read_file_bytes(path); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tfusion_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("zero noise returns the input") {
    Rng rng(1);
    const std::vector<double> x{0.6, 0.0, 0.8};
    const auto [a, b] = augment(x, 0.0, rng);
    CHECK(a == x);
    CHECK(b == x);
  }

  TEST_CASE("views stay within the cosine bound") {
    Rng rng(2);
    const std::vector<double> x = rng.unit_vector(6);
    double worst = 1.0;
    for (int i = 0; i < 10000; ++i) {
      const auto [a, b] = augment(x, 0.1, rng);
      worst = std::min({worst, dot(a, x), dot(b, x)});
      CHECK(std::abs(norm(a) - 1.0) < 1e-12);
    }
    CHECK(worst >= 0.9 - 1e-12);
  }

  TEST_CASE("batch layout pairs adjacent views") {
    Rng rng(3);
    const Matrix samples = row_l2_normalize(rng.normal_matrix(5, 4));
    const std::size_t idx[] = {4, 1};
    const Matrix views = augment_batch(samples, idx, 0.0, rng);
    REQUIRE(views.rows() == 4);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(views(0, j) - samples(4, j)) < 1e-15);
      CHECK(std::abs(views(1, j) - samples(4, j)) < 1e-15);
      CHECK(std::abs(views(3, j) - samples(1, j)) < 1e-15);
    }
  }
}

TEST_SUITE("mnist") {
  TEST_CASE("fixture parses to the golden matrix") {
    const Dataset d = load_mnist(kData + "/fixture-images.idx3-ubyte",
                                 kData + "/fixture-labels.idx1-ubyte");
    CHECK(d.labels == std::vector<std::size_t>{5, 0, 4});
    std::ifstream golden(kData + "/fixture-images.csv");
    const Matrix want = read_csv(golden);
    CHECK(d.samples.rows() == 3);
    CHECK(d.samples.cols() == 784);
    CHECK(d.samples == want);
  }

  TEST_CASE("limit") {
    const auto img = parse_idx_images(bytes_of(kData + "/fixture-images.idx3-ubyte"), 2);
    CHECK(img.pixels.rows() == 2);
    CHECK(img.rows == 28);
    CHECK(parse_idx_labels(bytes_of(kData + "/fixture-labels.idx1-ubyte"), 1).size() == 1);

    // A synthetic file with 150 records read with limit 100.
    std::vector<std::uint8_t> labels{0, 0, 8, 1, 0, 0, 0, 150};
    for (int i = 0; i < 150; ++i) labels.push_back(static_cast<std::uint8_t>(i % 10));
    CHECK(parse_idx_labels(labels, 100).size() == 100);
    CHECK(parse_idx_labels(labels).size() == 150);
  }

  TEST_CASE("wrong magic") {
    try {
      parse_idx_labels(bytes_of(kData + "/fixture-labels-badmagic.idx1-ubyte"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
      CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_idx_images(bytes_of(kData + "/fixture-labels.idx1-ubyte")), FormatError);
  }

  TEST_CASE("truncated files") {
    auto img = bytes_of(kData + "/fixture-images.idx3-ubyte");
    img.resize(img.size() - 10);
    try {
      parse_idx_images(img);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == img.size());
    }
    const std::vector<std::uint8_t> header_only{0, 0, 8, 3, 0, 0};
    CHECK_THROWS_AS(parse_idx_images(header_only), FormatError);
  }

  TEST_CASE("count mismatch") {
    const fs::path dir = scratch("mnist");
    std::vector<std::uint8_t> labels{0, 0, 8, 1, 0, 0, 0, 2, 1, 2};
    std::ofstream(dir / "two.idx1", std::ios::binary)
        .write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    CHECK_THROWS_AS(load_mnist(kData + "/fixture-images.idx3-ubyte", (dir / "two.idx1").string()),
                    FormatError);
    CHECK_THROWS_AS(read_file_bytes((dir / "missing").string()), Error);
    fs::remove_all(dir);
  }
}

TEST_SUITE("encoder") {
  TEST_CASE("zero weights give the normalized bias") {
    Rng rng(4);
    const std::size_t widths[] = {4, 6, 3};
    Encoder e = init_encoder(widths, rng);
    e.first.weight = Matrix(4, 6);
    e.second.weight = Matrix(6, 3);
    const Matrix out = encode(e, rng.normal_matrix(5, 4));
    const Matrix want = row_l2_normalize(e.second.bias);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(out(i, j) - want(0, j)) < 1e-15);
  }

  TEST_CASE("rows are unit norm") {
    Rng rng(5);
    const std::size_t widths[] = {8, 16, 8};
    const Matrix out = encode(init_encoder(widths, rng), rng.normal_matrix(10, 8));
    for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(norm(out.row(i)) - 1.0) < 1e-12);
  }

  TEST_CASE("gradients of every loss and the encoder") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      for (const auto& g : gradient_suite(seed)) {
        if (g.name.rfind("head_", 0) == 0) continue;
        CAPTURE(g.name);
        CHECK(g.relative_error < 1e-4);
      }
    }
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("cosine schedule endpoints") {
    CHECK(cosine_learning_rate(0, 100, 0.1, 0.001) == 0.1);
    CHECK(cosine_learning_rate(100, 100, 0.1, 0.001) == 0.001);
    CHECK(cosine_learning_rate(250, 100, 0.1, 0.001) == 0.001);
    CHECK(cosine_learning_rate(50, 100, 0.1, 0.0) == doctest::Approx(0.05).epsilon(1e-14));
    for (std::size_t t = 1; t < 100; ++t) {
      CHECK(cosine_learning_rate(t, 100, 0.1, 0.0) < cosine_learning_rate(t - 1, 100, 0.1, 0.0));
    }
  }

  TEST_CASE("weight decay contracts weights") {
    Matrix w{{1.0, -2.0}, {0.5, 3.0}};
    const Matrix w0 = w;
    Sgd sgd(0.0, 0.01);
    const double eta = 0.5;
    for (int step = 1; step <= 3; ++step) {
      const Matrix before = w;
      sgd.step({&w}, {Matrix(2, 2)}, eta);
      for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] == doctest::Approx(before[i] * (1 - eta * 0.01)).epsilon(1e-15));
    }
    CHECK(w[0] == doctest::Approx(w0[0] * std::pow(1 - eta * 0.01, 3)).epsilon(1e-14));
  }

  TEST_CASE("momentum accumulates") {
    Matrix w{{0.0}};
    Sgd sgd(0.9, 0.0);
    sgd.step({&w}, {Matrix{{1.0}}}, 1.0);
    CHECK(w(0, 0) == -1.0);
    sgd.step({&w}, {Matrix{{1.0}}}, 1.0);
    CHECK(w(0, 0) == doctest::Approx(-2.9));
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("one-hot embeddings are perfectly classified") {
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0, 1, 2};
    Matrix e(9, 3);
    for (std::size_t i = 0; i < 9; ++i) e(i, labels[i]) = 1.0;
    CHECK(nearest_neighbor_accuracy(e, labels) == 1.0);
    CHECK(linear_probe_accuracy(e, labels, e, labels) == 1.0);
  }

  TEST_CASE("random embeddings sit near chance") {
    Rng rng(6);
    const std::size_t n = 900, c = 3;
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % c;
    const double acc = nearest_neighbor_accuracy(rng.normal_matrix(n, 8), labels);
    const double p = 1.0 / c;
    CHECK(std::abs(acc - p) < 3.0 * std::sqrt(p * (1 - p) / n));
  }

  TEST_CASE("ties go to the lowest index") {
    // Row 0 is equidistant from rows 1 and 2.
    const Matrix e{{0, 0}, {1, 0}, {-1, 0}};
    CHECK(nearest_neighbor_accuracy(e, std::vector<std::size_t>{0, 0, 1}) == doctest::Approx(2.0 / 3.0));
    CHECK(nearest_neighbor_accuracy(e, std::vector<std::size_t>{0, 1, 0}) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(nearest_neighbor_accuracy(Matrix{{1, 2}}, std::vector<std::size_t>{0}),
                    DegenerateError);
  }

  TEST_CASE("probe on separable data") {
    Rng rng(7);
    Matrix train(60, 2), test(30, 2);
    std::vector<std::size_t> ytr(60), yte(30);
    for (std::size_t i = 0; i < 60; ++i) {
      ytr[i] = i % 2;
      train(i, 0) = (ytr[i] ? 1.0 : -1.0) + 0.2 * rng.uniform(-1, 1);
      train(i, 1) = rng.uniform(-1, 1);
    }
    for (std::size_t i = 0; i < 30; ++i) {
      yte[i] = i % 2;
      test(i, 0) = (yte[i] ? 1.0 : -1.0) + 0.2 * rng.uniform(-1, 1);
      test(i, 1) = rng.uniform(-1, 1);
    }
    CHECK(linear_probe_accuracy(train, ytr, test, yte) == 1.0);
  }

  TEST_CASE("block alignment") {
    const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1};
    Matrix ideal(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        if (i != j && labels[i] == labels[j]) ideal(i, j) = 0.5;
    CHECK(block_alignment(ideal, labels) == 1.0);
    CHECK(block_alignment(Matrix(6, 6, 1.0 / 6.0), labels) == doctest::Approx(2.0 / 5.0));

    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
      const double a = block_alignment(row_softmax(rng.normal_matrix(6, 6)), labels);
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    CHECK_THROWS_AS(block_alignment(Matrix(3, 3), labels), ShapeError);
  }
}

TEST_SUITE("data") {
  TEST_CASE("split keeps every class on both sides") {
    Rng rng(9);
    DataConfig dc;
    dc.ambient_dim = 8;
    dc.rank = 2;
    dc.per_cluster = 10;
    const Dataset d = make_synthetic(dc, rng);
    CHECK(d.size() == 30);
    CHECK(d.classes() == 3);
    const Split s = split_dataset(d, 0.2, rng);
    CHECK(s.test.size() == 6);
    CHECK(s.train.size() == 24);
    CHECK(s.test.classes() == 3);
  }

  TEST_CASE("stratified indices") {
    const std::vector<std::size_t> labels{1, 0, 1, 0, 1, 2};
    CHECK(stratified_indices(labels, 2) == std::vector<std::size_t>{0, 1, 2, 3, 5});
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults validate") { CHECK_NOTHROW(validate(RunConfig{})); }

  TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_config(R"({"optimizer": {"learnig_rate": 0.1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"colour": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  }

  TEST_CASE("odd batch size is rejected") {
    CHECK_THROWS_AS(parse_config(R"({"optimizer": {"batch_size": 31}})"), ConfigError);
  }

  TEST_CASE("round trip through JSON") {
    const RunConfig c = parse_config(
        R"({"seed": 3, "loss": {"kind": "jsd", "mixture": "listing"},
            "head": {"kind": "transformer", "heads": 4, "depth": 2},
            "optimizer": {"scheduler": "constant", "epochs": 7}})");
    CHECK(c.seed == 3);
    CHECK(c.loss.kind == LossKind::kJsd);
    CHECK(c.head.heads == 4);
    CHECK(c.head.dim == 32);
    const RunConfig back = parse_config(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.optimizer.schedule == Schedule::kConstant);
  }
}

TEST_SUITE("training") {
  TEST_CASE("zero learning rate leaves weights untouched") {
    RunConfig c = tiny_config();
    c.optimizer.learning_rate = 0.0;
    const TrainResult r = train(c);
    Rng root(c.seed);
    root.split();
    Rng init = root.split();
    const Encoder e0 = init_encoder(c.encoder_widths, init);
    const auto h0 = heads::init_head(c.head, init);
    const auto pe = r.encoder.parameters();
    const auto pe0 = e0.parameters();
    for (std::size_t i = 0; i < pe.size(); ++i) CHECK(*pe[i] == *pe0[i]);
    const auto ph = r.head.parameters();
    const auto ph0 = h0.parameters();
    REQUIRE(ph.size() == ph0.size());
    for (std::size_t i = 0; i < ph.size(); ++i) CHECK(*ph[i] == *ph0[i]);
  }

  TEST_CASE("same seed, same logs") {
    RunConfig c = tiny_config();
    c.optimizer.epochs = 1;
    const TrainResult a = train(c);
    const TrainResult b = train(c);
    REQUIRE(a.loss_log.size() == b.loss_log.size());
    for (std::size_t i = 0; i < a.loss_log.size(); ++i) CHECK(a.loss_log[i].loss == b.loss_log[i].loss);
    std::ostringstream ma, mb;
    write_metrics_csv(ma, a.history, 2);
    write_metrics_csv(mb, b.history, 2);
    CHECK(ma.str() == mb.str());
    CHECK(ma.str().rfind("epoch,loss,unsup_acc,probe_acc,sharpness_l1,sharpness_l2,align_l1,align_l2\n", 0) == 0);
  }

  TEST_CASE("every loss and head kind trains") {
    for (auto loss : {LossKind::kNtXent, LossKind::kJsd, LossKind::kKlSoftmax}) {
      for (auto kind : {heads::HeadKind::kFfn, heads::HeadKind::kTransFusion, heads::HeadKind::kTransformer}) {
        RunConfig c = tiny_config();
        c.optimizer.epochs = 1;
        c.loss.kind = loss;
        c.head.kind = kind;
        c.head.heads = 2;
        const TrainResult r = train(c);
        CAPTURE(to_string(loss));
        CHECK(r.final_report.unsupervised_accuracy >= 0.0);
        CHECK(r.final_report.unsupervised_accuracy <= 1.0);
        CHECK(r.final_report.alignment.size() == (kind == heads::HeadKind::kFfn ? 0u : 2u));
        for (const auto& e : r.loss_log) CHECK(std::isfinite(e.loss));
      }
    }
  }

  TEST_CASE("artifacts are written and reload") {
    const fs::path dir = scratch("run");
    RunConfig c = tiny_config();
    TrainOptions opt;
    opt.out_dir = dir;
    const TrainResult r = train(c, opt);
    for (const char* f : {"metrics.csv", "loss_log.csv", "encoder.flab", "head.manifest", "head.flab",
                          "config.json"}) {
      CHECK(fs::exists(dir / f));
    }
    CHECK(fs::exists(records_path(dir, 2)));
    const Encoder e = load_encoder(dir, c);
    const auto pe = e.parameters();
    const auto pr = r.encoder.parameters();
    for (std::size_t i = 0; i < pe.size(); ++i) CHECK(*pe[i] == *pr[i]);
    std::ifstream log(dir / "loss_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "epoch,step,loss");
    fs::remove_all(dir);
  }

  TEST_CASE("divergence aborts with a checkpoint") {
    const fs::path dir = scratch("diverge");
    RunConfig c = tiny_config();
    c.optimizer.learning_rate = 1e300;
    c.optimizer.max_grad_norm = 0.0;
    c.optimizer.momentum = 0.0;
    c.head.kind = heads::HeadKind::kFfn;
    TrainOptions opt;
    opt.out_dir = dir;
    CHECK_THROWS_AS(train(c, opt), DivergenceError);
    CHECK(fs::exists(dir / "encoder.flab"));
    fs::remove_all(dir);
  }
}

TEST_SUITE("attention export") {
  TEST_CASE("constant matrix maps to zeros") {
    std::stringstream ss;
    write_pgm(ss, Matrix(3, 4, 0.25));
    const Pgm p = read_pgm(ss);
    CHECK(p.width == 4);
    CHECK(p.height == 3);
    CHECK(p.maxval == 255);
    for (int v : p.pixels) CHECK(v == 0);
  }

  TEST_CASE("min-max scaling") {
    std::stringstream ss;
    write_pgm(ss, Matrix{{0.0, 0.5}, {1.0, 0.25}});
    CHECK(ss.str().rfind("P2\n", 0) == 0);
    const Pgm p = read_pgm(ss);
    CHECK(p.pixels == std::vector<int>{0, 128, 255, 64});
    std::stringstream bad;
    CHECK_THROWS_AS(write_pgm(bad, Matrix{{0.0, std::nan("")}}), NonFiniteError);
  }

  TEST_CASE("files per layer and per head") {
    const fs::path dir = scratch("export");
    Rng rng(10);
    std::vector<geometry::AffinityRecord> recs(3);
    for (std::size_t i = 0; i < 3; ++i) {
      recs[i].layer = i + 1;
      recs[i].attention = row_softmax(rng.normal_matrix(6, 6));
    }
    const auto paths = export_attention(recs, dir);
    CHECK(paths.size() == 6);
    CHECK(fs::exists(dir / "layer_3.pgm"));
    std::ifstream csv(dir / "layer_2.csv");
    CHECK(max_abs_diff(read_csv(csv), recs[1].attention) <= 1e-15);

    recs[1].layer = 1;
    const auto per_head = export_attention(recs, dir / "heads");
    CHECK(fs::exists(dir / "heads" / "layer_1_head_1.pgm"));
    CHECK(fs::exists(dir / "heads" / "layer_1_head_2.csv"));
    CHECK_THROWS_AS(export_attention({}, dir), DegenerateError);
    fs::remove_all(dir);
  }
}
