#include "szeeg/models.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "szeeg/error.hpp"
#include "szeeg/rng.hpp"

namespace szeeg::models {

namespace {

using nlohmann::json;

int argmax(const nn::Tensor& logits) {
  return static_cast<int>(std::ranges::max_element(logits.values()) -
                          logits.values().begin());
}

nn::Sequential build_net(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.input_shape[0] == 0 || cfg.input_shape[1] == 0)
    throw ParamError(fmt::format("model '{}': input shape must be positive", cfg.name));
  if (cfg.layers.empty())
    throw ParamError(fmt::format("model '{}': no layers", cfg.name));

  Rng root(seed);
  Rng init_rng = root.fork(0);
  nn::Sequential net(root.fork(1).next_u64());
  nn::Shape shape = cfg.input_shape;
  for (const LayerSpec& spec : cfg.layers) {
    std::unique_ptr<nn::Layer> layer;
    if (spec.kind == "conv1d") {
      layer = std::make_unique<nn::Conv1d>(
          shape[0], static_cast<std::size_t>(spec.filters),
          static_cast<std::size_t>(spec.kernel),
          nn::activation_from_name(spec.activation), init_rng);
    } else if (spec.kind == "maxpool") {
      layer = std::make_unique<nn::MaxPool1d>(
          static_cast<std::size_t>(spec.pool_size),
          static_cast<std::size_t>(spec.pool_size));
    } else if (spec.kind == "lstm") {
      layer = std::make_unique<nn::Lstm>(shape[0],
                                         static_cast<std::size_t>(spec.units),
                                         spec.return_sequences, spec.peephole,
                                         init_rng);
    } else if (spec.kind == "dense") {
      if (shape[1] != 1)
        throw ParamError(fmt::format(
            "model '{}': dense layer needs a flat input, got {}x{} (insert flatten)",
            cfg.name, shape[0], shape[1]));
      layer = std::make_unique<nn::Dense>(shape[0],
                                          static_cast<std::size_t>(spec.units),
                                          nn::activation_from_name(spec.activation),
                                          init_rng);
    } else if (spec.kind == "dropout") {
      layer = std::make_unique<nn::Dropout>(spec.rate);
    } else if (spec.kind == "flatten") {
      layer = std::make_unique<nn::Flatten>();
    } else {
      throw ParamError(fmt::format("model '{}': unknown layer kind '{}'", cfg.name,
                                   spec.kind));
    }
    shape = layer->output_shape(shape);
    net.add(std::move(layer));
  }
  if (shape != nn::Shape{2, 1})
    throw ParamError(fmt::format("model '{}': head must output 2 classes, got {}x{}",
                                 cfg.name, shape[0], shape[1]));
  return net;
}

void to_json(json& j, const LayerSpec& s) {
  j = json{{"kind", s.kind},
           {"filters", s.filters},
           {"kernel", s.kernel},
           {"pool_size", s.pool_size},
           {"units", s.units},
           {"activation", s.activation},
           {"rate", s.rate},
           {"return_sequences", s.return_sequences},
           {"peephole", s.peephole}};
}

LayerSpec layer_spec_from_json(const json& j) {
  LayerSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.filters = j.value("filters", 0);
  s.kernel = j.value("kernel", 0);
  s.pool_size = j.value("pool_size", 2);
  s.units = j.value("units", 0);
  s.activation = j.value("activation", "none");
  s.rate = j.value("rate", 0.0);
  s.return_sequences = j.value("return_sequences", false);
  s.peephole = j.value("peephole", true);
  return s;
}

}  // namespace

ModelConfig build_szhnn(nn::Shape input_shape) {
  return build_szhnn_variant(input_shape, 5, 15, 10, 10, 32);
}

ModelConfig build_szhnn_variant(nn::Shape input_shape, int filters1, int kernel1,
                                int filters2, int kernel2, int lstm_units) {
  if (filters1 <= 0 || filters2 <= 0 || kernel1 <= 0 || kernel2 <= 0 ||
      lstm_units <= 0)
    throw ParamError("build_szhnn_variant: all hyperparameters must be positive");
  ModelConfig cfg;
  cfg.name = "SzHNN";
  cfg.input_shape = input_shape;
  cfg.layers = {
      {.kind = "conv1d", .filters = filters1, .kernel = kernel1, .activation = "relu"},
      {.kind = "maxpool", .pool_size = 2},
      {.kind = "conv1d", .filters = filters2, .kernel = kernel2, .activation = "relu"},
      {.kind = "maxpool", .pool_size = 2},
      {.kind = "lstm", .units = lstm_units},
      {.kind = "dense", .units = 64, .activation = "relu"},
      {.kind = "dropout", .rate = 0.5},
      {.kind = "dense", .units = 2},
  };
  return cfg;
}

ModelConfig build_cnn(nn::Shape input_shape) {
  ModelConfig cfg;
  cfg.name = "CNN";
  cfg.input_shape = input_shape;
  cfg.layers = {
      {.kind = "conv1d", .filters = 5, .kernel = 15, .activation = "relu"},
      {.kind = "maxpool", .pool_size = 2},
      {.kind = "conv1d", .filters = 10, .kernel = 10, .activation = "relu"},
      {.kind = "maxpool", .pool_size = 2},
      {.kind = "conv1d", .filters = 10, .kernel = 10, .activation = "relu"},
      {.kind = "maxpool", .pool_size = 2},
      {.kind = "flatten"},
      {.kind = "dense", .units = 64, .activation = "relu"},
      {.kind = "dropout", .rate = 0.5},
      {.kind = "dense", .units = 32, .activation = "relu"},
      {.kind = "dropout", .rate = 0.2},
      {.kind = "dense", .units = 2},
  };
  return cfg;
}

ModelConfig build_lstm(nn::Shape input_shape) {
  ModelConfig cfg;
  cfg.name = "LSTM";
  cfg.input_shape = input_shape;
  cfg.layers = {
      {.kind = "lstm", .units = 32, .return_sequences = true},
      {.kind = "lstm", .units = 64},
      {.kind = "dense", .units = 32, .activation = "relu"},
      {.kind = "dropout", .rate = 0.5},
      {.kind = "dense", .units = 2},
  };
  return cfg;
}

ModelConfig config_for_kind(const std::string& kind, nn::Shape input_shape) {
  if (kind == "szhnn") return build_szhnn(input_shape);
  if (kind == "cnn") return build_cnn(input_shape);
  if (kind == "lstm") return build_lstm(input_shape);
  throw ParamError(fmt::format("config_for_kind: no network config for '{}'", kind));
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  Model m;
  m.config_ = config;
  m.seed_ = seed;
  m.net_ = build_net(config, seed);
  return m;
}

Model::Prediction Model::predict(const nn::Tensor& x) {
  const nn::Tensor out = net_.forward(x, false);
  Prediction p;
  p.probabilities = nn::softmax(out);
  p.label = static_cast<int>(std::ranges::max_element(p.probabilities) -
                             p.probabilities.begin());
  return p;
}

Model::Prediction Model::predict(const ingest::Segment& seg) {
  return predict(segment_tensor(seg));
}

void Model::save(std::ostream& out) {
  json j;
  j["format"] = "szeeg-model-v1";
  j["name"] = config_.name;
  j["seed"] = seed_;
  j["steps"] = steps_;
  j["input_shape"] = {config_.input_shape[0], config_.input_shape[1]};
  json layers = json::array();
  for (const LayerSpec& s : config_.layers) {
    json lj;
    to_json(lj, s);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  json params = json::array();
  for (nn::Tensor* p : net_.params())
    params.push_back(std::vector<double>(p->values().begin(), p->values().end()));
  j["params"] = std::move(params);
  out << j.dump(2) << '\n';
}

void Model::save(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParamError("model save: cannot write '" + path.string() + "'");
  save(out);
}

Model Model::load(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model load: bad checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "szeeg-model-v1")
    throw FormatError("model load: unrecognized checkpoint format");
  ModelConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw FormatError("model load: bad input shape");
  cfg.input_shape = {shape[0], shape[1]};
  for (const json& lj : j.at("layers")) cfg.layers.push_back(layer_spec_from_json(lj));

  Model m = build(cfg, j.at("seed").get<std::uint64_t>());
  m.steps_ = j.value("steps", std::size_t{0});
  const json& params = j.at("params");
  auto tensors = m.net_.params();
  if (params.size() != tensors.size())
    throw FormatError(fmt::format("model load: expected {} parameter arrays, got {}",
                                  tensors.size(), params.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto vals = params[i].get<std::vector<double>>();
    if (vals.size() != tensors[i]->size())
      throw FormatError(fmt::format("model load: parameter {} has {} values, expected {}",
                                    i, vals.size(), tensors[i]->size()));
    std::ranges::copy(vals, tensors[i]->values().begin());
  }
  return m;
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParamError("model load: cannot open '" + path.string() + "'");
  return load(in);
}

nn::Tensor segment_tensor(const ingest::Segment& seg) {
  nn::Tensor x(seg.data.rows(), seg.data.cols());
  std::ranges::copy(seg.data.values(), x.values().begin());
  return x;
}

Model train_subset(const ModelConfig& config,
                   std::span<const ingest::Segment* const> train_set, TrainRun& run,
                   std::span<const ingest::Segment* const> val_set) {
  if (train_set.empty()) throw ParamError("train: empty training set");
  bool has[2] = {false, false};
  for (const ingest::Segment* seg : train_set) {
    if (seg->label != 0 && seg->label != 1)
      throw ParamError("train: labels must be 0 or 1");
    has[seg->label] = true;
  }
  if (!has[0] || !has[1])
    throw ParamError("train: training set must contain both classes");
  if (run.epochs <= 0 || run.batch_size <= 0 || run.lr <= 0.0 || run.decay < 0.0)
    throw ParamError("train: bad hyperparameters");

  Model model = Model::build(config, run.seed);
  auto params = model.net().params();
  nn::TrainState state;
  state.lr = run.lr;
  state.decay = run.decay;
  state.attach(params);

  const std::size_t n = train_set.size();
  std::vector<nn::Tensor> inputs;
  inputs.reserve(n);
  std::vector<int> labels;
  labels.reserve(n);
  for (const ingest::Segment* seg : train_set) {
    inputs.push_back(segment_tensor(*seg));
    labels.push_back(seg->label);
  }

  Rng shuffle_rng = Rng(run.seed).fork(2);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  run.loss_curve.clear();
  run.train_acc_curve.clear();
  run.val_acc_curve.clear();

  const std::size_t bs = static_cast<std::size_t>(run.batch_size);
  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      model.net().zero_grads();
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t idx = order[start + b];
        const nn::Tensor out = model.net().forward(inputs[idx], true);
        nn::XentResult res = nn::softmax_xent(out, labels[idx]);
        if (!std::isfinite(res.loss))
          throw TrainError(fmt::format("train: loss diverged at epoch {}", epoch));
        loss_sum += res.loss;
        if (argmax(out) == labels[idx]) ++correct;
        for (double& g : res.grad.values()) g /= static_cast<double>(count);
        model.net().backward(res.grad);
      }
      nn::adam_step(state, params);
    }
    run.loss_curve.push_back(loss_sum / static_cast<double>(n));
    run.train_acc_curve.push_back(static_cast<double>(correct) /
                                  static_cast<double>(n));
    if (!val_set.empty()) run.val_acc_curve.push_back(accuracy(model, val_set));
  }
  model.set_steps(state.step);
  return model;
}

Model train(const ModelConfig& config, const ingest::DatasetManifest& data,
            TrainRun& run) {
  std::vector<const ingest::Segment*> all;
  all.reserve(data.segments.size());
  for (const ingest::Segment& seg : data.segments) all.push_back(&seg);
  return train_subset(config, all, run);
}

double accuracy(Model& model, std::span<const ingest::Segment* const> set) {
  if (set.empty()) throw ParamError("accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (const ingest::Segment* seg : set)
    if (model.predict(*seg).label == seg->label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

SvmModel svm_train(const Matrix& features, const std::vector<int>& labels, double C,
                   int epochs, std::uint64_t seed) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n == 0 || d == 0) throw ParamError("svm_train: empty feature matrix");
  if (labels.size() != n)
    throw ParamError("svm_train: label count does not match feature rows");
  if (C <= 0.0 || epochs <= 0) throw ParamError("svm_train: C and epochs must be positive");
  bool has[2] = {false, false};
  for (int l : labels) {
    if (l != 0 && l != 1) throw ParamError("svm_train: labels must be 0 or 1");
    has[l] = true;
  }
  if (!has[0] || !has[1])
    throw TrainError("svm_train: training set must contain both classes");

  SvmModel model;
  model.C = C;
  model.feature_mean.assign(d, 0.0);
  model.feature_std.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = features.row(i);
    for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += row[j];
  }
  for (double& m : model.feature_mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = features.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = row[j] - model.feature_mean[j];
      model.feature_std[j] += dev * dev;
    }
  }
  for (double& s : model.feature_std) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;  // constant feature: centered to zero, left unscaled
  }

  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x.at(i, j) = (features.at(i, j) - model.feature_mean[j]) / model.feature_std[j];

  // Pegasos schedule on the hinge objective. The bias is trained as the
  // weight on an augmented constant feature, so it shares the w update
  // (mildly regularized; immaterial on standardized, balanced data).
  const double lambda = 1.0 / (C * static_cast<double>(n));
  std::vector<double> w(d + 1, 0.0);
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t t = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t oi = 0; oi < n; ++oi) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const std::size_t i = order[oi];
      const double y = labels[i] == 1 ? 1.0 : -1.0;
      auto row = x.row(i);
      double margin = w[d];
      for (std::size_t j = 0; j < d; ++j) margin += w[j] * row[j];
      const double shrink = 1.0 - eta * lambda;  // = 1 - 1/t
      for (double& wj : w) wj *= shrink;
      if (y * margin < 1.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] += eta * y * row[j];
        w[d] += eta * y;
      }
    }
  }
  for (double v : w)
    if (!std::isfinite(v)) throw TrainError("svm_train: weights diverged");
  model.bias = w[d];
  w.pop_back();
  model.weights = std::move(w);
  model.trained = true;
  return model;
}

SvmPrediction svm_predict(const SvmModel& model, std::span<const double> feature) {
  if (!model.trained) throw ParamError("svm_predict: model not trained");
  if (feature.size() != model.weights.size())
    throw ShapeError(fmt::format("svm_predict: expected {} features, got {}",
                                 model.weights.size(), feature.size()));
  double margin = model.bias;
  for (std::size_t j = 0; j < feature.size(); ++j)
    margin += model.weights[j] *
              ((feature[j] - model.feature_mean[j]) / model.feature_std[j]);
  SvmPrediction p;
  p.margin = margin;
  if (margin > 0.0) {
    p.label = 1;
  } else if (margin < 0.0) {
    p.label = 0;
  } else {
    p.label = 0;  // documented tie rule
    p.tie = true;
  }
  return p;
}

double svm_accuracy(const SvmModel& model, const Matrix& features,
                    const std::vector<int>& labels) {
  if (features.rows() == 0 || features.rows() != labels.size())
    throw ParamError("svm_accuracy: bad evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.rows(); ++i)
    if (svm_predict(model, features.row(i)).label == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(features.rows());
}

Matrix psd_feature_matrix(std::span<const ingest::Segment* const> segs,
                          const dsp::WelchOptions& opt, std::vector<int>* labels) {
  if (segs.empty()) throw ParamError("psd_feature_matrix: no segments");
  if (labels) labels->clear();
  Matrix out;
  std::size_t n_masked = 0;
  for (std::size_t si = 0; si < segs.size(); ++si) {
    const ingest::Segment& seg = *segs[si];
    const dsp::PsdFeature feat = dsp::welch_psd(seg, opt);
    if (si == 0) {
      for (bool m : feat.band_mask) n_masked += m ? 1 : 0;
      if (n_masked == 0) throw ParamError("psd_feature_matrix: empty band mask");
      out = Matrix(segs.size(), seg.data.rows() * n_masked);
    }
    auto row = out.row(si);
    if (row.size() != seg.data.rows() * n_masked)
      throw ShapeError("psd_feature_matrix: segments do not share one shape");
    std::size_t col = 0;
    for (std::size_t ch = 0; ch < seg.data.rows(); ++ch)
      for (std::size_t k = 0; k < feat.band_mask.size(); ++k)
        if (feat.band_mask[k]) row[col++] = feat.log_power.at(ch, k);
    if (labels) labels->push_back(seg.label);
  }
  return out;
}

}  // namespace szeeg::models
