#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "szeeg/rng.hpp"

namespace szeeg::nn {

// Dense 2-D array with optional same-shape gradient storage. Column vectors
// are represented as n x 1. 64-bit floats throughout.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  static Tensor vec(std::size_t n, double fill = 0.0) { return Tensor(n, 1, fill); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool has_grad() const { return !grad_.empty(); }
  void ensure_grad() { grad_.assign(values_.size(), 0.0); }
  void zero_grad() { if (has_grad()) grad_.assign(values_.size(), 0.0); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  double& grad_at(std::size_t r, std::size_t c) { return grad_[r * cols_ + c]; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> values_;
  std::vector<double> grad_;
};

enum class Activation { none, relu };

Activation activation_from_name(std::string_view name);
std::string_view activation_name(Activation act);

// ---------------------------------------------------------------------------
// Stateless primitives. These carry no caches and are the reference forward
// math; the trainable layers below share the same kernels.

// Full-depth 1-D convolution: every filter spans all input channels and
// kernel_len time steps, valid padding, stride 1.
struct Conv1dLayer {
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  std::size_t kernel_len = 0;
  Activation activation = Activation::none;
  Tensor weights;  // filters x (in_channels * kernel_len)
  Tensor bias;     // filters x 1
};

// x: [in_channels x T] -> [filters x (T - kernel_len + 1)]
Tensor conv1d_forward(const Tensor& x, const Conv1dLayer& layer);

// x: [C x T] -> [C x floor((T - size)/stride + 1)]; odd tail dropped.
Tensor maxpool1d(const Tensor& x, std::size_t size = 2, std::size_t stride = 2);

// Peephole LSTM cell. Gate equations (sigma = logistic, per-unit):
//   i = sigma(P_i x + Q_i h_prev + R_i .* c_prev + b_i)
//   f = sigma(P_f x + Q_f h_prev + R_f .* c_prev + b_f)
//   chat = tanh(P_c x + Q_c h_prev + b_c)
//   c = f .* c_prev + i .* chat
//   o = sigma(P_o x + Q_o h_prev + R_o .* c + b_o)   (o peeks at the NEW cell)
//   h = o .* tanh(c)
// The peephole vectors R_* act as trainable diagonal matrices; with
// peephole=false they are dropped and the cell is a conventional LSTM.
struct LstmCell {
  std::size_t input_dim = 0;
  std::size_t units = 0;
  bool peephole = true;
  Tensor P_i, P_o, P_f, P_c;  // units x input_dim
  Tensor Q_i, Q_o, Q_f, Q_c;  // units x units
  Tensor R_i, R_o, R_f;       // units x 1
  Tensor b_i, b_o, b_f, b_c;  // units x 1
  Tensor h, c;                // running state, units x 1

  void reset_state();
};

LstmCell make_lstm_cell(std::size_t input_dim, std::size_t units, bool peephole = true);

// One step; updates cell.h / cell.c and returns the new hidden state.
Tensor lstm_step(LstmCell& cell, const Tensor& x_t);

// x is time-major [T x input_dim]; state is reset, the cell is stepped over
// all T rows, and the final hidden state [units x 1] is returned.
Tensor lstm_sequence(LstmCell& cell, const Tensor& x);

// y = act(W x + b); x is [in x 1], W [out x in], b [out x 1].
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b, Activation act);

// Inverted dropout: each element zeroed with probability p, survivors scaled
// by 1/(1-p). Identity when training=false or p=0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

struct XentResult {
  double loss = 0.0;
  Tensor grad;  // dLoss/dlogits, same shape as logits
};

// Numerically stabilized softmax + sparse categorical cross-entropy.
XentResult softmax_xent(const Tensor& logits, int label);
std::vector<double> softmax(const Tensor& logits);

// ---------------------------------------------------------------------------
// Trainable layer graph. All activations flowing between layers are 2-D:
// feature maps are [channels x time], vectors are [n x 1]. Each layer caches
// what its backward pass needs; backward accumulates into parameter grads and
// returns the gradient w.r.t. its input.

using Shape = std::array<std::size_t, 2>;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training, Rng& rng) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<Tensor*>& out) { (void)out; }
  virtual Shape output_shape(Shape in) const = 0;
  virtual std::string describe() const = 0;
};

class Conv1d final : public Layer {
 public:
  Conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel_len,
         Activation act, Rng& rng);

  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Tensor*>& out) override;
  Shape output_shape(Shape in) const override;
  std::string describe() const override;

  Conv1dLayer& spec() { return spec_; }

 private:
  Conv1dLayer spec_;
  Tensor x_, pre_;
};

class MaxPool1d final : public Layer {
 public:
  explicit MaxPool1d(std::size_t size = 2, std::size_t stride = 2);

  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  Shape output_shape(Shape in) const override;
  std::string describe() const override;

 private:
  std::size_t size_, stride_;
  Shape in_shape_{0, 0};
  std::vector<std::size_t> argmax_;
};

// Consumes [input_dim x T] (one column per time step). Emits the full hidden
// sequence [units x T] or only the final state [units x 1].
class Lstm final : public Layer {
 public:
  Lstm(std::size_t input_dim, std::size_t units, bool return_sequences,
       bool peephole, Rng& rng, bool forget_bias_one = true);

  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Tensor*>& out) override;
  Shape output_shape(Shape in) const override;
  std::string describe() const override;

  LstmCell& cell() { return cell_; }

 private:
  LstmCell cell_;
  bool return_sequences_;
  Tensor x_;
  // per-step caches, each units x T
  Tensor i_, f_, o_, chat_, c_, tc_, h_;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng);

  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Tensor*>& out) override;
  Shape output_shape(Shape in) const override;
  std::string describe() const override;

  Tensor& weights() { return w_; }
  Tensor& bias() { return b_; }

 private:
  std::size_t in_dim_, out_dim_;
  Activation act_;
  Tensor w_, b_;
  Tensor x_, pre_;
};

class Dropout final : public Layer {
 public:
  explicit Dropout(double rate);

  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  Shape output_shape(Shape in) const override;
  std::string describe() const override;

  double rate() const { return rate_; }

 private:
  double rate_;
  bool masked_ = false;
  Tensor mask_;
};

class Flatten final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  Shape output_shape(Shape in) const override;
  std::string describe() const override;

 private:
  Shape in_shape_{0, 0};
};

class Sequential {
 public:
  explicit Sequential(std::uint64_t dropout_seed = 0) : rng_(dropout_seed) {}

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  Tensor forward(const Tensor& x, bool training);
  // dy is the gradient w.r.t. the network output; returns d(input).
  Tensor backward(const Tensor& dy);

  std::vector<Tensor*> params();
  std::size_t parameter_count();
  void zero_grads();

  Shape output_shape(Shape in) const;
  // Shape after every layer, starting with the input shape.
  std::vector<Shape> shape_chain(Shape in) const;

  Rng& rng() { return rng_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  Rng rng_;
};

// Uniform Glorot over [-sqrt(6/(fan_in+fan_out)), +...].
void glorot_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// Optimizer.

struct TrainState {
  double lr = 1e-4;
  double decay = 1e-4;  // lr_t = lr / (1 + decay * completed_steps)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;

  void attach(const std::vector<Tensor*>& params);
};

// One Adam update over params' accumulated grads (with bias correction).
void adam_step(TrainState& state, const std::vector<Tensor*>& params);

// Central finite differences over every parameter of `model` against the
// analytic backward pass, using softmax cross-entropy loss on (input, label).
// Runs in eval mode (dropout off). Returns the max relative error, where
// rel = |ga - gn| / max(1e-2, |ga|, |gn|). The default step keeps the
// perturbation small enough that relu / maxpool kinks are almost never
// crossed; larger steps give spurious O(1) errors on piecewise-linear nets.
double gradcheck(Sequential& model, const Tensor& input, int label, double eps = 1e-5);

}  // namespace szeeg::nn
