#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "szeeg/error.hpp"
#include "szeeg/models.hpp"
#include "szeeg/rng.hpp"
#include "oracles.hpp"

using namespace szeeg;
using models::Model;
using models::ModelConfig;
using models::TrainRun;

namespace {

ingest::Segment noise_segment(std::size_t channels, std::size_t samples, double fs,
                              int label, Rng& rng, const std::string& subject = "s0") {
  std::vector<std::vector<double>> rows(channels, std::vector<double>(samples));
  for (auto& row : rows)
    for (double& v : row) v = rng.normal();
  return testsupport::make_segment(rows, fs, label, subject);
}

std::vector<const ingest::Segment*> ptrs(const std::vector<ingest::Segment>& segs) {
  std::vector<const ingest::Segment*> out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back(&s);
  return out;
}

// small hybrid net that trains in milliseconds
ModelConfig tiny_hybrid() {
  return models::build_szhnn_variant({2, 32}, 2, 5, 3, 3, 4);
}

std::vector<ingest::Segment> mixed_noise_set(std::size_t n, Rng& rng) {
  std::vector<ingest::Segment> segs;
  for (std::size_t i = 0; i < n; ++i)
    segs.push_back(noise_segment(2, 32, 128.0, static_cast<int>(i % 2), rng,
                                 "s" + std::to_string(i)));
  return segs;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("szhnn config matches the documented topology") {
  const ModelConfig cfg = models::build_szhnn({19, 6250});
  CHECK(cfg.name == "SzHNN");
  REQUIRE(cfg.layers.size() == 8);
  CHECK(cfg.layers[0].kind == "conv1d");
  CHECK(cfg.layers[0].filters == 5);
  CHECK(cfg.layers[0].kernel == 15);
  CHECK(cfg.layers[2].filters == 10);
  CHECK(cfg.layers[2].kernel == 10);
  CHECK(cfg.layers[4].kind == "lstm");
  CHECK(cfg.layers[4].units == 32);
  CHECK(cfg.layers[4].peephole);
  CHECK_FALSE(cfg.layers[4].return_sequences);
  CHECK(cfg.layers[5].units == 64);
  CHECK(cfg.layers[6].rate == 0.5);
  CHECK(cfg.layers[7].units == 2);

  Model model = Model::build(cfg, 1);
  const std::vector<nn::Shape> expected = {
      {19, 6250}, {5, 6236}, {5, 3118}, {10, 3109}, {10, 1554},
      {32, 1},    {64, 1},   {64, 1},   {2, 1}};
  CHECK(model.shape_chain() == expected);
  CHECK(model.parameter_count() == 9782);
}

TEST_CASE("cnn config flattens three conv stages") {
  const ModelConfig cfg = models::build_cnn({19, 6250});
  CHECK(cfg.name == "CNN");
  REQUIRE(cfg.layers.size() == 12);
  CHECK(cfg.layers[6].kind == "flatten");

  Model model = Model::build(cfg, 1);
  const auto chain = model.shape_chain();
  REQUIRE(chain.size() == 13);
  CHECK(chain[6] == nn::Shape{10, 772});
  CHECK(chain[7] == nn::Shape{7720, 1});
  CHECK(chain.back() == nn::Shape{2, 1});
  // 1430 + 510 + 1010 conv stages, 494144 + 2080 + 66 dense head
  CHECK(model.parameter_count() == 499240);
}

TEST_CASE("lstm config stacks two recurrent layers") {
  const ModelConfig cfg = models::build_lstm({19, 6250});
  CHECK(cfg.name == "LSTM");
  REQUIRE(cfg.layers.size() == 5);
  CHECK(cfg.layers[0].return_sequences);
  CHECK(cfg.layers[1].units == 64);

  Model model = Model::build(cfg, 1);
  const std::vector<nn::Shape> expected = {
      {19, 6250}, {32, 6250}, {64, 1}, {32, 1}, {32, 1}, {2, 1}};
  CHECK(model.shape_chain() == expected);
  CHECK(model.parameter_count() == 33922);
}

TEST_CASE("dataset-2 shaped input runs end to end") {
  Rng rng(11);
  Model model = Model::build(models::build_szhnn({16, 7680}), 11);
  CHECK(model.shape_chain().back() == nn::Shape{2, 1});

  const ingest::Segment seg = noise_segment(16, 7680, 128.0, 0, rng);
  const nn::Tensor x = models::segment_tensor(seg);
  CHECK(x.rows() == 16);
  CHECK(x.cols() == 7680);
  CHECK(x.at(3, 100) == seg.data.at(3, 100));

  const auto pred = model.predict(seg);
  CHECK((pred.label == 0 || pred.label == 1));
  REQUIRE(pred.probabilities.size() == 2);
  CHECK(pred.probabilities[0] + pred.probabilities[1] ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("build rejects impossible or malformed configs") {
  CHECK_THROWS_AS(Model::build(models::build_szhnn({1, 10}), 1), ShapeError);
  CHECK_THROWS_AS(models::build_szhnn_variant({2, 32}, 0, 5, 3, 3, 4), ParamError);
  CHECK_THROWS_AS(models::config_for_kind("mlp", {4, 64}), ParamError);

  ModelConfig no_flatten;
  no_flatten.name = "X";
  no_flatten.input_shape = {2, 32};
  no_flatten.layers = {
      {.kind = "conv1d", .filters = 2, .kernel = 5, .activation = "relu"},
      {.kind = "dense", .units = 2},
  };
  CHECK_THROWS_WITH_AS(Model::build(no_flatten, 1),
                       doctest::Contains("insert flatten"), ParamError);

  ModelConfig wide_head = tiny_hybrid();
  wide_head.layers.back().units = 3;
  CHECK_THROWS_WITH_AS(Model::build(wide_head, 1),
                       doctest::Contains("head must output 2 classes"), ParamError);

  ModelConfig bogus = tiny_hybrid();
  bogus.layers[0].kind = "attention";
  CHECK_THROWS_AS(Model::build(bogus, 1), ParamError);
}

TEST_CASE("checkpoints round-trip through a stream") {
  Rng rng(21);
  Model model = Model::build(tiny_hybrid(), 42);
  model.set_steps(7);

  std::vector<ingest::Segment> probes;
  for (int i = 0; i < 3; ++i) probes.push_back(noise_segment(2, 32, 128.0, 0, rng));

  std::stringstream buf;
  model.save(buf);
  Model copy = Model::load(buf);

  CHECK(copy.seed() == 42);
  CHECK(copy.steps() == 7);
  CHECK(copy.config().name == model.config().name);
  CHECK(copy.config().layers.size() == model.config().layers.size());
  CHECK(copy.shape_chain() == model.shape_chain());
  for (auto& seg : probes) {
    const auto a = model.predict(seg);
    const auto b = copy.predict(seg);
    CHECK(a.label == b.label);
    REQUIRE(a.probabilities.size() == b.probabilities.size());
    for (std::size_t k = 0; k < a.probabilities.size(); ++k)
      CHECK(a.probabilities[k] == b.probabilities[k]);  // bit-exact
  }
}

TEST_CASE("checkpoint loading rejects corrupted payloads") {
  Model model = Model::build(tiny_hybrid(), 5);
  std::stringstream buf;
  model.save(buf);
  const std::string good = buf.str();

  {
    std::stringstream in("this is not json");
    CHECK_THROWS_AS(Model::load(in), FormatError);
  }
  {
    auto j = nlohmann::json::parse(good);
    j["format"] = "other-checkpoint";
    std::stringstream in(j.dump());
    CHECK_THROWS_WITH_AS(Model::load(in), doctest::Contains("unrecognized"),
                         FormatError);
  }
  {
    auto j = nlohmann::json::parse(good);
    j["params"].erase(j["params"].size() - 1);
    std::stringstream in(j.dump());
    CHECK_THROWS_WITH_AS(Model::load(in), doctest::Contains("parameter arrays"),
                         FormatError);
  }
  {
    auto j = nlohmann::json::parse(good);
    j["params"][0].erase(0);
    std::stringstream in(j.dump());
    CHECK_THROWS_AS(Model::load(in), FormatError);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  Rng rng(31);
  const auto segs = mixed_noise_set(12, rng);
  const auto set = ptrs(segs);

  auto run_once = [&] {
    TrainRun run;
    run.epochs = 3;
    run.batch_size = 4;
    run.lr = 1e-3;
    run.seed = 9;
    Model m = models::train_subset(tiny_hybrid(), set, run);
    return std::pair(run, std::move(m));
  };

  auto [run_a, model_a] = run_once();
  auto [run_b, model_b] = run_once();

  REQUIRE(run_a.loss_curve.size() == 3);
  CHECK(run_a.loss_curve == run_b.loss_curve);
  CHECK(run_a.train_acc_curve == run_b.train_acc_curve);
  for (const auto* seg : set) {
    const auto pa = model_a.predict(*seg);
    const auto pb = model_b.predict(*seg);
    CHECK(pa.probabilities == pb.probabilities);
  }

  // and the step counter advances: ceil(12/4) = 3 batches x 3 epochs
  CHECK(model_a.steps() == 9);
}

TEST_CASE("validation accuracy is tracked per epoch") {
  Rng rng(41);
  const auto train_segs = mixed_noise_set(8, rng);
  const auto val_segs = mixed_noise_set(4, rng);
  const auto train_set = ptrs(train_segs);
  const auto val_set = ptrs(val_segs);

  TrainRun run;
  run.epochs = 2;
  run.batch_size = 4;
  run.seed = 1;
  Model m = models::train_subset(tiny_hybrid(), train_set, run, val_set);
  CHECK(run.loss_curve.size() == 2);
  CHECK(run.val_acc_curve.size() == 2);
  for (double acc : run.val_acc_curve) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
}

TEST_CASE("non-finite input surfaces as a divergence error") {
  // an LSTM's saturating gates would squash the inf to a finite hidden state,
  // so use a linear stack where the poisoned sample reaches the logits
  models::ModelConfig cfg;
  cfg.name = "CNN";
  cfg.input_shape = {2, 32};
  cfg.layers = {{.kind = "flatten"}, {.kind = "dense", .units = 2}};

  Rng rng(51);
  std::vector<ingest::Segment> segs = mixed_noise_set(4, rng);
  segs[0].data.at(0, 3) = std::numeric_limits<double>::infinity();
  const auto set = ptrs(segs);

  TrainRun run;
  run.epochs = 2;
  run.batch_size = 2;
  run.seed = 1;
  CHECK_THROWS_WITH_AS(models::train_subset(cfg, set, run),
                       doctest::Contains("epoch 0"), TrainError);
}

TEST_CASE("training rejects degenerate sets and parameters") {
  Rng rng(61);
  std::vector<ingest::Segment> one_class;
  for (int i = 0; i < 4; ++i) one_class.push_back(noise_segment(2, 32, 128.0, 1, rng));
  const auto set = ptrs(one_class);

  TrainRun run;
  run.epochs = 1;
  run.batch_size = 2;
  CHECK_THROWS_AS(models::train_subset(tiny_hybrid(), set, run), ParamError);

  std::vector<const ingest::Segment*> empty;
  CHECK_THROWS_AS(models::train_subset(tiny_hybrid(), empty, run), ParamError);

  const auto mixed = mixed_noise_set(4, rng);
  const auto mixed_set = ptrs(mixed);
  TrainRun bad = run;
  bad.epochs = 0;
  CHECK_THROWS_AS(models::train_subset(tiny_hybrid(), mixed_set, bad), ParamError);
}

TEST_CASE("accuracy agrees with per-segment predictions") {
  Rng rng(71);
  const auto segs = mixed_noise_set(10, rng);
  const auto set = ptrs(segs);
  Model model = Model::build(tiny_hybrid(), 2);

  std::size_t correct = 0;
  for (const auto* seg : set)
    if (model.predict(*seg).label == seg->label) ++correct;
  const double expected = static_cast<double>(correct) / 10.0;
  CHECK(models::accuracy(model, set) == doctest::Approx(expected).epsilon(1e-12));

  std::vector<const ingest::Segment*> empty;
  CHECK_THROWS_AS(models::accuracy(model, empty), ParamError);
}

TEST_CASE("predictions are repeatable in eval mode") {
  Rng rng(81);
  Model model = Model::build(tiny_hybrid(), 3);  // contains dropout 0.5
  const ingest::Segment seg = noise_segment(2, 32, 128.0, 0, rng);
  const auto a = model.predict(seg);
  const auto b = model.predict(seg);
  CHECK(a.probabilities == b.probabilities);
}

TEST_CASE("svm separates a linearly separable cloud") {
  Rng rng(91);
  Matrix features(20, 2);
  std::vector<int> labels(20);
  for (std::size_t i = 0; i < 20; ++i) {
    const int label = static_cast<int>(i % 2);
    features.at(i, 0) = (label == 1 ? 2.0 : -2.0) + 0.1 * rng.normal();
    features.at(i, 1) = rng.normal();
    labels[i] = label;
  }
  const auto model = models::svm_train(features, labels, 10.0, 200, 7);
  CHECK(model.trained);
  CHECK(models::svm_accuracy(model, features, labels) == 1.0);

  // margins carry the sign of the class
  for (std::size_t i = 0; i < 20; ++i) {
    const auto pred = models::svm_predict(model, features.row(i));
    CHECK(pred.label == labels[i]);
    CHECK((labels[i] == 1 ? pred.margin > 0.0 : pred.margin < 0.0));
  }
}

TEST_CASE("svm label flip negates every margin") {
  Rng rng(101);
  Matrix features(16, 3);
  std::vector<int> labels(16), flipped(16);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 3; ++j) features.at(i, j) = rng.normal();
    labels[i] = static_cast<int>(i % 2);
    flipped[i] = 1 - labels[i];
  }
  const auto a = models::svm_train(features, labels, 1.0, 50, 13);
  const auto b = models::svm_train(features, flipped, 1.0, 50, 13);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto pa = models::svm_predict(a, features.row(i));
    const auto pb = models::svm_predict(b, features.row(i));
    CHECK(pa.margin == doctest::Approx(-pb.margin).epsilon(1e-12));
    if (!pa.tie && !pb.tie) CHECK(pa.label == 1 - pb.label);
  }
}

TEST_CASE("svm cannot fit xor") {
  Matrix features(4, 2);
  features.at(0, 0) = 0.0; features.at(0, 1) = 0.0;
  features.at(1, 0) = 1.0; features.at(1, 1) = 1.0;
  features.at(2, 0) = 0.0; features.at(2, 1) = 1.0;
  features.at(3, 0) = 1.0; features.at(3, 1) = 0.0;
  const std::vector<int> labels = {0, 0, 1, 1};
  const auto model = models::svm_train(features, labels, 1.0, 100, 5);
  CHECK(models::svm_accuracy(model, features, labels) <= 0.75);
}

TEST_CASE("svm is invariant to feature scaling") {
  Rng rng(111);
  Matrix features(12, 2), scaled(12, 2);
  std::vector<int> labels(12);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      features.at(i, j) = rng.normal();
      scaled.at(i, j) = 3.0 * features.at(i, j);
    }
    labels[i] = static_cast<int>(i % 2);
  }
  const auto a = models::svm_train(features, labels, 1.0, 60, 17);
  const auto b = models::svm_train(scaled, labels, 1.0, 60, 17);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto pa = models::svm_predict(a, features.row(i));
    const auto pb = models::svm_predict(b, scaled.row(i));
    CHECK(pa.label == pb.label);
    CHECK(pa.margin == doctest::Approx(pb.margin).epsilon(1e-9));
  }
}

TEST_CASE("svm rejects degenerate training sets") {
  Matrix features(4, 2, 1.0);
  CHECK_THROWS_AS(models::svm_train(features, {1, 1, 1, 1}, 1.0, 10, 1), TrainError);
  CHECK_THROWS_AS(models::svm_train(features, {0, 1}, 1.0, 10, 1), ParamError);
  CHECK_THROWS_AS(models::svm_train(features, {0, 1, 0, 2}, 1.0, 10, 1), ParamError);
  CHECK_THROWS_AS(models::svm_train(features, {0, 1, 0, 1}, 0.0, 10, 1), ParamError);
  CHECK_THROWS_AS(models::svm_train(Matrix(), {}, 1.0, 10, 1), ParamError);
}

TEST_CASE("svm zero margin breaks ties to class 0") {
  models::SvmModel flat;
  flat.weights = {0.0, 0.0};
  flat.bias = 0.0;
  flat.trained = true;
  flat.feature_mean = {0.0, 0.0};
  flat.feature_std = {1.0, 1.0};

  const std::vector<double> x = {1.0, -1.0};
  const auto pred = models::svm_predict(flat, x);
  CHECK(pred.margin == 0.0);
  CHECK(pred.label == 0);
  CHECK(pred.tie);

  models::SvmModel untrained;
  CHECK_THROWS_AS(models::svm_predict(untrained, x), ParamError);

  const std::vector<double> wide = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(models::svm_predict(flat, wide), ShapeError);
}

TEST_CASE("psd feature matrix is channel-major masked log power") {
  Rng rng(121);
  std::vector<ingest::Segment> segs;
  for (int i = 0; i < 6; ++i)
    segs.push_back(noise_segment(2, 256, 128.0, i % 2, rng));
  const auto set = ptrs(segs);

  dsp::WelchOptions opt;
  opt.nfft = 64;
  std::vector<int> labels;
  const Matrix m = models::psd_feature_matrix(set, opt, &labels);
  CHECK(m.rows() == 6);
  // fs 128, nfft 64 -> 2 Hz bins; 4..44 Hz inside the 4-45 mask = 21 bins/channel
  CHECK(m.cols() == 42);
  REQUIRE(labels.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(labels[i] == static_cast<int>(i % 2));

  // row 0 must equal the welch feature of segment 0 restricted to the mask
  const auto feat = dsp::welch_psd(segs[0], opt);
  std::size_t col = 0;
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t k = 0; k < feat.freqs_hz.size(); ++k)
      if (feat.band_mask[k]) CHECK(m.at(0, col++) == feat.log_power.at(ch, k));
  CHECK(col == m.cols());

  std::vector<ingest::Segment> mixed = {segs[0], noise_segment(3, 256, 128.0, 1, rng)};
  const auto mixed_set = ptrs(mixed);
  CHECK_THROWS_AS(models::psd_feature_matrix(mixed_set, opt, nullptr), ShapeError);

  std::vector<const ingest::Segment*> empty;
  CHECK_THROWS_AS(models::psd_feature_matrix(empty, opt, nullptr), ParamError);
}

}  // TEST_SUITE
