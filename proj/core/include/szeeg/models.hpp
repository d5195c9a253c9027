#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "szeeg/dsp.hpp"
#include "szeeg/ingest.hpp"
#include "szeeg/matrix.hpp"
#include "szeeg/nn.hpp"

namespace szeeg::models {

// Declarative layer description; a ModelConfig is an ordered list of these
// plus the input shape, and fully determines the network graph.
struct LayerSpec {
  std::string kind;  // conv1d | maxpool | lstm | dense | dropout | flatten
  int filters = 0;
  int kernel = 0;
  int pool_size = 2;
  int units = 0;
  std::string activation = "none";
  double rate = 0.0;            // dropout
  bool return_sequences = false;  // lstm
  bool peephole = true;           // lstm
};

struct ModelConfig {
  std::string name;  // SzHNN | CNN | LSTM
  nn::Shape input_shape{0, 0};
  std::vector<LayerSpec> layers;
};

// Hybrid CNN-LSTM: Conv(5,k15,ReLU) > Pool2 > Conv(10,k10,ReLU) > Pool2 >
// LSTM(32) > Dense(64,ReLU) > Dropout(0.5) > Dense(2).
ModelConfig build_szhnn(nn::Shape input_shape);
// Same topology with configurable filter counts / kernel sizes / LSTM width,
// for the hyperparameter sweeps.
ModelConfig build_szhnn_variant(nn::Shape input_shape, int filters1, int kernel1,
                                int filters2, int kernel2, int lstm_units);
// Pure CNN: three conv+pool stages, flatten, Dense(64,ReLU,0.5) >
// Dense(32,ReLU,0.2) > Dense(2).
ModelConfig build_cnn(nn::Shape input_shape);
// Stacked LSTM over raw channels: LSTM(32, sequences) > LSTM(64) >
// Dense(32,ReLU) > Dropout(0.5) > Dense(2).
ModelConfig build_lstm(nn::Shape input_shape);

ModelConfig config_for_kind(const std::string& kind, nn::Shape input_shape);

struct TrainRun {
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-4;
  double decay = 1e-4;
  std::uint64_t seed = 0;
  // filled by train(): one entry per completed epoch
  std::vector<double> loss_curve;
  std::vector<double> train_acc_curve;
  std::vector<double> val_acc_curve;  // only when a validation set is given
};

class Model {
 public:
  Model() = default;

  // Builds the network with seeded Glorot initialization.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::Sequential& net() { return net_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t s) { steps_ = s; }

  std::size_t parameter_count() { return net_.parameter_count(); }
  std::vector<nn::Shape> shape_chain() const {
    return net_.shape_chain(config_.input_shape);
  }

  struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
  };

  // Eval-mode (dropout off) forward + softmax + argmax.
  Prediction predict(const nn::Tensor& x);
  Prediction predict(const ingest::Segment& seg);

  // JSON checkpoint: config + flat parameter arrays + seed + step count.
  void save(std::ostream& out);
  void save(const std::filesystem::path& path);
  static Model load(std::istream& in);
  static Model load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  nn::Sequential net_;
  std::uint64_t seed_ = 0;
  std::size_t steps_ = 0;
};

nn::Tensor segment_tensor(const ingest::Segment& seg);

// Mini-batch training with Adam and sparse categorical cross-entropy.
// Shuffling, init and dropout all derive from run.seed. Throws TrainError
// naming the epoch if the loss goes non-finite.
Model train_subset(const ModelConfig& config,
                   std::span<const ingest::Segment* const> train_set, TrainRun& run,
                   std::span<const ingest::Segment* const> val_set = {});
Model train(const ModelConfig& config, const ingest::DatasetManifest& data,
            TrainRun& run);

double accuracy(Model& model, std::span<const ingest::Segment* const> set);

// ---------------------------------------------------------------------------
// Linear SVM baseline over log-PSD features.

struct SvmModel {
  std::vector<double> weights;
  double bias = 0.0;
  double C = 1.0;
  bool trained = false;
  // training-set standardization, applied to every input
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
};

struct SvmPrediction {
  int label = 0;
  double margin = 0.0;
  bool tie = false;  // margin exactly 0; broken to class 0
};

// Soft-margin hinge loss trained by seeded stochastic subgradient descent
// (Pegasos-style schedule, lambda = 1/(C*n)).
SvmModel svm_train(const Matrix& features, const std::vector<int>& labels, double C,
                   int epochs, std::uint64_t seed);
SvmPrediction svm_predict(const SvmModel& model, std::span<const double> feature);
double svm_accuracy(const SvmModel& model, const Matrix& features,
                    const std::vector<int>& labels);

// One row per segment: masked log-PSD bins, channel-major. All segments must
// share shape and sampling rate. Labels are written to *labels when given.
Matrix psd_feature_matrix(std::span<const ingest::Segment* const> segs,
                          const dsp::WelchOptions& opt, std::vector<int>* labels);

}  // namespace szeeg::models
