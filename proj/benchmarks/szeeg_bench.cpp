// Microbenchmarks for the hot paths: convolution, LSTM stepping, Welch PSD,
// zero-phase filtering and the optimizer. Sizes mirror the dataset-1 layout
// (19 channels, 25 s at 250 Hz) so the numbers map onto real training cost.

#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "szeeg/dsp.hpp"
#include "szeeg/ingest.hpp"
#include "szeeg/models.hpp"
#include "szeeg/nn.hpp"
#include "szeeg/rng.hpp"

namespace {

using szeeg::Rng;
namespace nn = szeeg::nn;

nn::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  nn::Tensor t(rows, cols);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

szeeg::ingest::Segment noise_segment(std::size_t channels, std::size_t samples,
                                     double fs, Rng& rng) {
  szeeg::ingest::Segment seg;
  seg.data = szeeg::Matrix(channels, samples);
  for (auto& v : seg.data.values()) v = rng.normal();
  seg.sample_rate_hz = fs;
  return seg;
}

void bm_conv1d_forward(benchmark::State& state) {
  Rng rng(1);
  nn::Conv1dLayer layer;
  layer.in_channels = 19;
  layer.filters = 5;
  layer.kernel_len = 15;
  layer.activation = nn::Activation::relu;
  layer.weights = random_tensor(5, 19 * 15, rng);
  layer.bias = random_tensor(5, 1, rng);
  nn::Tensor x = random_tensor(19, 6250, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::conv1d_forward(x, layer));
  }
}
BENCHMARK(bm_conv1d_forward)->Unit(benchmark::kMillisecond);

void bm_maxpool1d(benchmark::State& state) {
  Rng rng(2);
  nn::Tensor x = random_tensor(5, 6236, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::maxpool1d(x));
  }
}
BENCHMARK(bm_maxpool1d);

void bm_lstm_step(benchmark::State& state) {
  Rng rng(3);
  nn::LstmCell cell = nn::make_lstm_cell(10, 32);
  nn::glorot_init(cell.P_i, 10, 32, rng);
  nn::glorot_init(cell.Q_i, 32, 32, rng);
  nn::Tensor x = random_tensor(10, 1, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::lstm_step(cell, x));
  }
}
BENCHMARK(bm_lstm_step);

void bm_lstm_sequence(benchmark::State& state) {
  // post-conv sequence length of the hybrid on a 6250-sample window
  Rng rng(4);
  nn::LstmCell cell = nn::make_lstm_cell(10, 32);
  nn::glorot_init(cell.P_i, 10, 32, rng);
  nn::glorot_init(cell.Q_i, 32, 32, rng);
  nn::Tensor x = random_tensor(1554, 10, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::lstm_sequence(cell, x));
  }
}
BENCHMARK(bm_lstm_sequence)->Unit(benchmark::kMillisecond);

void bm_filtfilt(benchmark::State& state) {
  Rng rng(5);
  auto spec = szeeg::dsp::design_butterworth_bandpass(4, 4.0, 45.0, 250.0);
  std::vector<double> x(6250);
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(szeeg::dsp::filtfilt(spec, x));
  }
}
BENCHMARK(bm_filtfilt);

void bm_welch_psd(benchmark::State& state) {
  Rng rng(6);
  auto seg = noise_segment(19, 6250, 250.0, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(szeeg::dsp::welch_psd(seg, 250.0));
  }
}
BENCHMARK(bm_welch_psd)->Unit(benchmark::kMillisecond);

void bm_adam_step(benchmark::State& state) {
  // full hybrid parameter set (9782 weights)
  auto model = szeeg::models::Model::build(
      szeeg::models::build_szhnn({19, 6250}), 7);
  auto params = model.net().params();
  nn::TrainState ts;
  ts.attach(params);
  Rng rng(8);
  for (auto* p : params) {
    p->ensure_grad();
    for (auto& g : p->grad()) g = rng.normal() * 1e-3;
  }
  for (auto _ : state) {
    nn::adam_step(ts, params);
  }
}
BENCHMARK(bm_adam_step);

void bm_szhnn_predict(benchmark::State& state) {
  auto model = szeeg::models::Model::build(
      szeeg::models::build_szhnn({19, 6250}), 7);
  Rng rng(9);
  auto seg = noise_segment(19, 6250, 250.0, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict(seg));
  }
}
BENCHMARK(bm_szhnn_predict)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
