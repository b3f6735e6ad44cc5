#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexhand/demodata.hpp"
#include "dexhand/policy.hpp"
#include "dexhand/rng.hpp"

using namespace dexhand;
using Catch::Approx;

namespace {

constexpr int kTinyRows = 8;
constexpr int kTinyCols = 16;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dexhand_policy_" + name)).string();
}

Image noise_image(std::uint64_t seed, int rows = kTinyRows, int cols = kTinyCols) {
  Image img = Image::zeros(rows, cols);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<float>(rng.uniform_at(i));
  return img;
}

Command15 noise_labels(std::uint64_t seed) {
  Command15 bits{};
  SplitMix64 rng(seed);
  for (int i = 0; i < kNumJoints; ++i) bits[i] = rng.uniform_at(i) < 0.5 ? 0 : 1;
  return bits;
}

Dataset noise_dataset(int samples, std::uint64_t seed) {
  Dataset ds;
  for (int k = 0; k < samples; ++k) {
    ds.inputs.push_back(noise_image(seed + 2 * k));
    ds.labels.push_back(noise_labels(seed + 2 * k + 1));
  }
  return ds;
}

template <class M>
bool bit_equal(const M& a, const M& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace

TEST_CASE("network shapes") {
  SECTION("stride-2 extents halve and round up") {
    REQUIRE(conv_out_extent(160) == 80);
    REQUIRE(conv_out_extent(80) == 40);
    REQUIRE(conv_out_extent(40) == 20);
    REQUIRE(conv_out_extent(320) == 160);
    REQUIRE(conv_out_extent(5) == 3);
  }

  SECTION("camera model flattens to 32x20x40 and the tiny variant to 64") {
    CnnModel full = make_cnn<float>(kImageRows, kImageCols, 1);
    REQUIRE(full.flat_size() == 32 * 20 * 40);
    CnnModel tiny = make_cnn<float>(kTinyRows, kTinyCols, 1);
    REQUIRE(tiny.flat_size() == 32 * 1 * 2);
    REQUIRE(tiny.dense[0].W.cols() == 64);
    REQUIRE(tiny.dense[2].W.rows() == kNumJoints);
  }

  SECTION("the final layer is pinned to 15 outputs") {
    REQUIRE_THROWS_AS(make_cnn<float>(kTinyRows, kTinyCols, 1, {8, 16, 32}, {128, 64, 14}),
                      ShapeError);
  }

  SECTION("initialization is seeded") {
    CnnModel a = make_cnn<float>(kTinyRows, kTinyCols, 42);
    CnnModel b = make_cnn<float>(kTinyRows, kTinyCols, 42);
    CnnModel c = make_cnn<float>(kTinyRows, kTinyCols, 43);
    REQUIRE(bit_equal(a.conv[0].W, b.conv[0].W));
    REQUIRE(bit_equal(a.dense[1].W, b.dense[1].W));
    REQUIRE_FALSE(bit_equal(a.conv[0].W, c.conv[0].W));
  }
}

TEST_CASE("forward pass") {
  Image img = noise_image(7);

  SECTION("zero weights mean maximum uncertainty") {
    CnnModel model = zeros_like(make_cnn<float>(kTinyRows, kTinyCols, 1));
    auto p = forward(model, img);
    for (double v : p) REQUIRE(v == Approx(0.5).margin(1e-12));
    REQUIRE(predict_commands(model, img) == Command15{});
  }

  SECTION("probabilities stay strictly inside the unit interval") {
    CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 5);
    for (std::uint64_t s = 0; s < 8; ++s) {
      auto p = forward(model, noise_image(100 + s));
      for (double v : p) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
      }
    }
  }

  SECTION("forward is a pure function of model and input") {
    CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 5);
    REQUIRE(forward(model, img) == forward(model, img));
  }

  SECTION("a confident bias turns into command bits") {
    CnnModel model = zeros_like(make_cnn<float>(kTinyRows, kTinyCols, 1));
    model.dense[2].b(3, 0) = 4.0f;
    Command15 cmd = predict_commands(model, img);
    Command15 want{};
    want[3] = 1;
    REQUIRE(cmd == want);
  }

  SECTION("mismatched input shapes are rejected") {
    CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 1);
    REQUIRE_THROWS_AS(forward(model, noise_image(1, kTinyRows, kTinyCols + 1)), ShapeError);
  }
}

TEST_CASE("loss and gradients") {
  std::vector<Image> images = {noise_image(11), noise_image(12)};
  std::vector<Command15> labels = {noise_labels(13), noise_labels(14)};

  SECTION("maximum-uncertainty model scores ln 2") {
    CnnModel model = zeros_like(make_cnn<float>(kTinyRows, kTinyCols, 1));
    auto [loss, grads] = loss_and_grad(model, std::span<const Image>(images),
                                       std::span<const Command15>(labels));
    REQUIRE(loss == Approx(std::numbers::ln2).margin(1e-6));
  }

  SECTION("saturated correct predictions cost almost nothing") {
    CnnModel model = zeros_like(make_cnn<float>(kTinyRows, kTinyCols, 1));
    Command15 pattern = noise_labels(15);
    for (int i = 0; i < kNumJoints; ++i) model.dense[2].b(i, 0) = pattern[i] ? 20.0f : -20.0f;
    std::vector<Command15> fixed = {pattern, pattern};
    auto [loss, grads] = loss_and_grad(model, std::span<const Image>(images),
                                       std::span<const Command15>(fixed));
    REQUIRE(loss < 1e-6);
  }

  SECTION("empty and mismatched batches are rejected") {
    CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 1);
    std::vector<Image> none;
    std::vector<Command15> one = {labels[0]};
    REQUIRE_THROWS_AS(loss_and_grad(model, std::span<const Image>(none),
                                    std::span<const Command15>(one)),
                      ShapeError);
    REQUIRE_THROWS_AS(loss_and_grad(model, std::span<const Image>(images),
                                    std::span<const Command15>(one)),
                      ShapeError);
  }

  SECTION("analytic gradients match central differences at 64-bit") {
    CnnModelT<double> model = make_cnn<double>(kTinyRows, kTinyCols, 21);
    double worst = gradient_check(model, std::span<const Image>(images),
                                  std::span<const Command15>(labels), 4, 99);
    REQUIRE(worst < 1e-4);
  }
}

TEST_CASE("adam optimizer") {
  CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 31);

  SECTION("zero gradients leave parameters untouched") {
    CnnModel before = model;
    AdamState<float> state(model);
    adam_update(model, zeros_like(model), state, 1);
    auto now = model_tensors(model);
    auto was = model_tensors(before);
    for (std::size_t i = 0; i < now.size(); ++i) REQUIRE(bit_equal(*now[i], *was[i]));
  }

  SECTION("constant gradients settle at lr-sized steps") {
    AdamConfig cfg;
    CnnModel grads = zeros_like(model);
    grads.conv[0].W(0, 0) = 0.37f;
    AdamState<float> state(model);
    float prev = model.conv[0].W(0, 0);
    double step_size = 0.0;
    for (int step = 1; step <= 200; ++step) {
      adam_update(model, grads, state, step, cfg);
      step_size = std::abs(model.conv[0].W(0, 0) - prev);
      prev = model.conv[0].W(0, 0);
    }
    REQUIRE(step_size == Approx(cfg.lr).epsilon(0.05));
    REQUIRE(model.conv[0].W(0, 1) == make_cnn<float>(kTinyRows, kTinyCols, 31).conv[0].W(0, 1));
  }

  SECTION("updates are deterministic") {
    CnnModel a = model, b = model;
    CnnModel grads = make_cnn<float>(kTinyRows, kTinyCols, 77);
    AdamState<float> sa(a), sb(b);
    for (int step = 1; step <= 3; ++step) {
      adam_update(a, grads, sa, step);
      adam_update(b, grads, sb, step);
    }
    REQUIRE(bit_equal(a.dense[0].W, b.dense[0].W));
  }

  SECTION("step numbering starts at one") {
    AdamState<float> state(model);
    REQUIRE_THROWS_AS(adam_update(model, zeros_like(model), state, 0), RangeError);
  }
}

TEST_CASE("training loop") {
  SECTION("an empty dataset is an error") {
    Dataset empty;
    REQUIRE_THROWS_AS(train(empty, TrainConfig{}), EmptyDatasetError);
  }

  SECTION("config knobs are validated") {
    TrainConfig cfg;
    cfg.adam.lr = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    REQUIRE_THROWS_AS(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.luminance_range = {0.0, 1.0};
    REQUIRE_THROWS_AS(cfg.validate(), DomainError);
  }

  SECTION("defaults match the training recipe") {
    TrainConfig cfg;
    REQUIRE(cfg.epochs == 45);
    REQUIRE(cfg.batch_size == 75);
    REQUIRE(cfg.adam.lr == Approx(1e-3));
    REQUIRE(cfg.luminance_range[0] == Approx(0.2));
    REQUIRE(cfg.luminance_range[1] == Approx(1.2));
  }

  SECTION("the config hash tracks every knob") {
    TrainConfig a, b;
    b.adam.lr = 2e-3;
    REQUIRE(a.hash() != b.hash());
    b = TrainConfig{};
    b.seed = 9;
    REQUIRE(a.hash() != b.hash());
  }

  SECTION("same seed reproduces the report bit for bit") {
    Dataset ds = noise_dataset(6, 50);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.steps_per_epoch = 2;
    auto [model_a, report_a] = train(ds, cfg);
    auto [model_b, report_b] = train(ds, cfg);
    REQUIRE(report_a == report_b);
    REQUIRE(bit_equal(model_a.conv[2].W, model_b.conv[2].W));
    REQUIRE(bit_equal(model_a.dense[2].b, model_b.dense[2].b));
    cfg.seed = 2;
    auto [model_c, report_c] = train(ds, cfg);
    REQUIRE(report_a.epoch_loss != report_c.epoch_loss);
  }

  SECTION("loss is non-increasing on a fixed small batch after the transient") {
    Dataset ds = noise_dataset(5, 60);
    TrainConfig cfg;
    cfg.batch_size = 5;
    cfg.epochs = 60;
    cfg.steps_per_epoch = 1;
    cfg.adam.lr = 1e-3;
    cfg.luminance_range = {1.0, 1.0};  // identity factor keeps the batch fixed
    auto [model, report] = train(ds, cfg);
    REQUIRE(report.epoch_loss.size() == 60);
    for (std::size_t e = 5; e + 1 < report.epoch_loss.size(); ++e)
      REQUIRE(report.epoch_loss[e + 1] <= report.epoch_loss[e] + 1e-12);
  }

  SECTION("five samples overfit within 200 epochs") {
    Dataset ds = noise_dataset(5, 70);
    TrainConfig cfg;
    cfg.batch_size = 5;
    cfg.epochs = 200;
    cfg.steps_per_epoch = 1;
    cfg.adam.lr = 1e-2;
    cfg.luminance_range = {1.0, 1.0};
    auto [model, report] = train(ds, cfg);
    REQUIRE(report.epoch_loss.back() < 0.01);
    REQUIRE(report.mean_accuracy == Approx(1.0));
  }

  SECTION("accuracy counts thresholded matches per joint") {
    Dataset ds = noise_dataset(4, 80);
    CnnModel model = zeros_like(make_cnn<float>(kTinyRows, kTinyCols, 1));
    auto acc = command_accuracy(model, ds);
    for (int i = 0; i < kNumJoints; ++i) {
      double zeros = 0.0;
      for (const auto& l : ds.labels) zeros += l[i] == 0 ? 1.0 : 0.0;
      REQUIRE(acc[i] == Approx(zeros / ds.size()));
    }
  }
}

TEST_CASE("checkpoints") {
  SECTION("a save/load cycle preserves every tensor bit") {
    CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 91);
    const std::string path = temp_path("model.dxhc");
    save_checkpoint(model, path, {{"note", "test"}});
    CnnModel back = load_checkpoint<float>(path);
    auto orig = model_tensors(model);
    auto loaded = model_tensors(back);
    for (std::size_t i = 0; i < orig.size(); ++i) REQUIRE(bit_equal(*orig[i], *loaded[i]));
    Image img = noise_image(3);
    REQUIRE(forward(model, img) == forward(back, img));
  }

  SECTION("the sidecar records the architecture") {
    CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 91);
    const std::string path = temp_path("side.dxhc");
    save_checkpoint(model, path);
    std::ifstream in(path + ".json");
    REQUIRE(in.good());
    nlohmann::json side;
    in >> side;
    REQUIRE(side.at("in_rows") == kTinyRows);
    REQUIRE(side.at("in_cols") == kTinyCols);
    REQUIRE(side.at("scalar_bytes") == 4);
    REQUIRE(side.at("conv_channels") == nlohmann::json({8, 16, 32}));
  }

  SECTION("bad files are rejected") {
    const std::string path = temp_path("junk.dxhc");
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
    out.close();
    REQUIRE_THROWS_AS(load_checkpoint<float>(path), ParseError);
    REQUIRE_THROWS_AS(load_checkpoint<float>(temp_path("missing.dxhc")), IoError);
  }

  SECTION("scalar width must match the requested type") {
    CnnModelT<double> model = make_cnn<double>(kTinyRows, kTinyCols, 91);
    const std::string path = temp_path("wide.dxhc");
    save_checkpoint(model, path);
    REQUIRE_THROWS_AS(load_checkpoint<float>(path), ParseError);
    REQUIRE_NOTHROW(load_checkpoint<double>(path));
  }

  SECTION("truncated tensor data is rejected") {
    CnnModel model = make_cnn<float>(kTinyRows, kTinyCols, 91);
    const std::string path = temp_path("trunc.dxhc");
    save_checkpoint(model, path);
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    REQUIRE_THROWS_AS(load_checkpoint<float>(path), ParseError);
  }
}
