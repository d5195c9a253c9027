#include "szeeg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>

#include "szeeg/error.hpp"

namespace szeeg::nn {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

// y += A x
void gemv_acc(const Tensor& a, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    const double* row = &a.values()[r * a.cols()];
    for (std::size_t c = 0; c < a.cols(); ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += A^T x
void gemv_t_acc(const Tensor& a, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xv = x[r];
    if (xv == 0.0) continue;
    const double* row = &a.values()[r * a.cols()];
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += row[c] * xv;
  }
}

// grad(A) += u v^T
void outer_acc(Tensor& a, std::span<const double> u, std::span<const double> v) {
  auto g = a.grad();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double uv = u[r];
    if (uv == 0.0) continue;
    double* row = &g[r * a.cols()];
    for (std::size_t c = 0; c < a.cols(); ++c) row[c] += uv * v[c];
  }
}

void apply_activation(Tensor& t, Activation act) {
  if (act == Activation::relu)
    for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

Tensor conv_preactivation(const Tensor& x, const Conv1dLayer& layer) {
  if (x.rows() != layer.in_channels)
    throw ShapeError(fmt::format("conv1d: expected {} input channels, got {}",
                                 layer.in_channels, x.rows()));
  if (x.cols() < layer.kernel_len)
    throw ShapeError(fmt::format("conv1d: input length {} shorter than kernel {}",
                                 x.cols(), layer.kernel_len));
  const std::size_t M = x.cols() - layer.kernel_len + 1;
  const std::size_t K = layer.kernel_len;
  Tensor out(layer.filters, M);
  for (std::size_t f = 0; f < layer.filters; ++f) {
    const double* w = &layer.weights.values()[f * layer.in_channels * K];
    double* y = &out.values()[f * M];
    const double b = layer.bias[f];
    for (std::size_t t = 0; t < M; ++t) y[t] = b;
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      const double* xr = &x.values()[c * x.cols()];
      const double* wk = w + c * K;
      for (std::size_t k = 0; k < K; ++k) {
        const double wv = wk[k];
        if (wv == 0.0) continue;
        for (std::size_t t = 0; t < M; ++t) y[t] += wv * xr[t + k];
      }
    }
  }
  return out;
}

struct LstmStepView {
  std::span<double> i, f, o, chat, c, tc, h;
};

void lstm_step_core(const LstmCell& cell, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> c_prev,
                    LstmStepView out) {
  const std::size_t U = cell.units;
  for (std::size_t u = 0; u < U; ++u) {
    out.i[u] = cell.b_i[u];
    out.f[u] = cell.b_f[u];
    out.o[u] = cell.b_o[u];
    out.chat[u] = cell.b_c[u];
  }
  gemv_acc(cell.P_i, x, out.i);
  gemv_acc(cell.P_f, x, out.f);
  gemv_acc(cell.P_o, x, out.o);
  gemv_acc(cell.P_c, x, out.chat);
  gemv_acc(cell.Q_i, h_prev, out.i);
  gemv_acc(cell.Q_f, h_prev, out.f);
  gemv_acc(cell.Q_o, h_prev, out.o);
  gemv_acc(cell.Q_c, h_prev, out.chat);
  if (cell.peephole) {
    for (std::size_t u = 0; u < U; ++u) {
      out.i[u] += cell.R_i[u] * c_prev[u];
      out.f[u] += cell.R_f[u] * c_prev[u];
    }
  }
  for (std::size_t u = 0; u < U; ++u) {
    out.i[u] = sigmoid(out.i[u]);
    out.f[u] = sigmoid(out.f[u]);
    out.chat[u] = std::tanh(out.chat[u]);
    out.c[u] = out.f[u] * c_prev[u] + out.i[u] * out.chat[u];
  }
  if (cell.peephole)
    for (std::size_t u = 0; u < U; ++u) out.o[u] += cell.R_o[u] * out.c[u];
  for (std::size_t u = 0; u < U; ++u) {
    out.o[u] = sigmoid(out.o[u]);
    out.tc[u] = std::tanh(out.c[u]);
    out.h[u] = out.o[u] * out.tc[u];
  }
}

}  // namespace

Activation activation_from_name(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "none" || name.empty()) return Activation::none;
  throw ParamError(fmt::format("unknown activation '{}'", name));
}

std::string_view activation_name(Activation act) {
  return act == Activation::relu ? "relu" : "none";
}

Tensor conv1d_forward(const Tensor& x, const Conv1dLayer& layer) {
  Tensor out = conv_preactivation(x, layer);
  apply_activation(out, layer.activation);
  return out;
}

Tensor maxpool1d(const Tensor& x, std::size_t size, std::size_t stride) {
  if (size == 0 || stride == 0) throw ParamError("maxpool1d: size/stride must be positive");
  if (x.cols() < size)
    throw ShapeError(fmt::format("maxpool1d: input length {} shorter than pool size {}",
                                 x.cols(), size));
  const std::size_t M = (x.cols() - size) / stride + 1;
  Tensor out(x.rows(), M);
  for (std::size_t c = 0; c < x.rows(); ++c) {
    for (std::size_t t = 0; t < M; ++t) {
      double best = x.at(c, t * stride);
      for (std::size_t j = 1; j < size; ++j)
        best = std::max(best, x.at(c, t * stride + j));
      out.at(c, t) = best;
    }
  }
  return out;
}

void LstmCell::reset_state() {
  h = Tensor::vec(units);
  c = Tensor::vec(units);
}

LstmCell make_lstm_cell(std::size_t input_dim, std::size_t units, bool peephole) {
  LstmCell cell;
  cell.input_dim = input_dim;
  cell.units = units;
  cell.peephole = peephole;
  for (Tensor* p : {&cell.P_i, &cell.P_o, &cell.P_f, &cell.P_c})
    *p = Tensor(units, input_dim);
  for (Tensor* q : {&cell.Q_i, &cell.Q_o, &cell.Q_f, &cell.Q_c})
    *q = Tensor(units, units);
  for (Tensor* r : {&cell.R_i, &cell.R_o, &cell.R_f}) *r = Tensor::vec(units);
  for (Tensor* b : {&cell.b_i, &cell.b_o, &cell.b_f, &cell.b_c})
    *b = Tensor::vec(units);
  cell.reset_state();
  return cell;
}

Tensor lstm_step(LstmCell& cell, const Tensor& x_t) {
  if (x_t.size() != cell.input_dim)
    throw ShapeError(fmt::format("lstm_step: expected input of dim {}, got {}",
                                 cell.input_dim, x_t.size()));
  if (cell.h.size() != cell.units) cell.reset_state();
  const std::size_t U = cell.units;
  std::vector<double> i(U), f(U), o(U), chat(U), c(U), tc(U), h(U);
  lstm_step_core(cell, x_t.values(), cell.h.values(), cell.c.values(),
                 {i, f, o, chat, c, tc, h});
  std::ranges::copy(h, cell.h.values().begin());
  std::ranges::copy(c, cell.c.values().begin());
  return cell.h;
}

Tensor lstm_sequence(LstmCell& cell, const Tensor& x) {
  if (x.rows() == 0) throw ShapeError("lstm_sequence: empty sequence");
  if (x.cols() != cell.input_dim)
    throw ShapeError(fmt::format("lstm_sequence: expected {} features per step, got {}",
                                 cell.input_dim, x.cols()));
  cell.reset_state();
  Tensor x_t = Tensor::vec(cell.input_dim);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    std::copy_n(&x.values()[t * x.cols()], x.cols(), x_t.values().begin());
    lstm_step(cell, x_t);
  }
  return cell.h;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                     Activation act) {
  if (x.cols() != 1 || x.rows() != w.cols())
    throw ShapeError(fmt::format("dense: expected {}x1 input, got {}x{}", w.cols(),
                                 x.rows(), x.cols()));
  if (b.rows() != w.rows() || b.cols() != 1)
    throw ShapeError("dense: bias shape mismatch");
  Tensor out = Tensor::vec(w.rows());
  std::ranges::copy(b.values(), out.values().begin());
  gemv_acc(w, x.values(), out.values());
  apply_activation(out, act);
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ParamError("dropout: rate must be in [0, 1)");
  if (!training || p == 0.0) return x;
  Tensor out = x;
  const double scale = 1.0 / (1.0 - p);
  for (double& v : out.values()) v = rng.uniform() < p ? 0.0 : v * scale;
  return out;
}

XentResult softmax_xent(const Tensor& logits, int label) {
  const std::size_t n = logits.size();
  if (n == 0) throw ShapeError("softmax_xent: empty logits");
  if (label < 0 || static_cast<std::size_t>(label) >= n)
    throw ParamError(fmt::format("softmax_xent: label {} out of range", label));
  const double m = *std::ranges::max_element(logits.values());
  double z = 0.0;
  XentResult res;
  res.grad = Tensor(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < n; ++i) {
    res.grad[i] = std::exp(logits[i] - m);
    z += res.grad[i];
  }
  for (std::size_t i = 0; i < n; ++i) res.grad[i] /= z;
  res.loss = std::log(z) + m - logits[static_cast<std::size_t>(label)];
  res.grad[static_cast<std::size_t>(label)] -= 1.0;
  return res;
}

std::vector<double> softmax(const Tensor& logits) {
  const double m = *std::ranges::max_element(logits.values());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

// ---------------------------------------------------------------------------
// Layers.

Conv1d::Conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel_len,
               Activation act, Rng& rng) {
  if (in_channels == 0 || filters == 0 || kernel_len == 0)
    throw ParamError("conv1d: channels, filters and kernel must be positive");
  spec_.in_channels = in_channels;
  spec_.filters = filters;
  spec_.kernel_len = kernel_len;
  spec_.activation = act;
  spec_.weights = Tensor(filters, in_channels * kernel_len);
  glorot_init(spec_.weights, in_channels * kernel_len, filters * kernel_len, rng);
  spec_.bias = Tensor::vec(filters);
  spec_.weights.ensure_grad();
  spec_.bias.ensure_grad();
}

Tensor Conv1d::forward(const Tensor& x, bool, Rng&) {
  x_ = x;
  pre_ = conv_preactivation(x, spec_);
  Tensor out = pre_;
  apply_activation(out, spec_.activation);
  return out;
}

Tensor Conv1d::backward(const Tensor& dy) {
  if (!dy.same_shape(pre_)) throw ShapeError("conv1d backward: shape mismatch");
  const std::size_t K = spec_.kernel_len;
  const std::size_t M = pre_.cols();
  Tensor dx(x_.rows(), x_.cols());
  auto dw = spec_.weights.grad();
  auto db = spec_.bias.grad();
  for (std::size_t f = 0; f < spec_.filters; ++f) {
    const double* dyr = &dy.values()[f * M];
    const double* pr = &pre_.values()[f * M];
    const double* w = &spec_.weights.values()[f * spec_.in_channels * K];
    double* dwf = &dw[f * spec_.in_channels * K];
    for (std::size_t t = 0; t < M; ++t) {
      double da = dyr[t];
      if (spec_.activation == Activation::relu && pr[t] <= 0.0) da = 0.0;
      if (da == 0.0) continue;
      db[f] += da;
      for (std::size_t c = 0; c < spec_.in_channels; ++c) {
        const double* xr = &x_.values()[c * x_.cols() + t];
        double* dxr = &dx.values()[c * x_.cols() + t];
        const double* wc = w + c * K;
        double* dwc = dwf + c * K;
        for (std::size_t k = 0; k < K; ++k) {
          dwc[k] += da * xr[k];
          dxr[k] += da * wc[k];
        }
      }
    }
  }
  return dx;
}

void Conv1d::collect_params(std::vector<Tensor*>& out) {
  out.push_back(&spec_.weights);
  out.push_back(&spec_.bias);
}

Shape Conv1d::output_shape(Shape in) const {
  if (in[0] != spec_.in_channels)
    throw ShapeError(fmt::format("conv1d: expected {} input channels, got {}",
                                 spec_.in_channels, in[0]));
  if (in[1] < spec_.kernel_len)
    throw ShapeError(fmt::format("conv1d: input length {} shorter than kernel {}",
                                 in[1], spec_.kernel_len));
  return {spec_.filters, in[1] - spec_.kernel_len + 1};
}

std::string Conv1d::describe() const {
  return fmt::format("conv1d(filters={}, kernel={}, act={})", spec_.filters,
                     spec_.kernel_len, activation_name(spec_.activation));
}

MaxPool1d::MaxPool1d(std::size_t size, std::size_t stride)
    : size_(size), stride_(stride) {
  if (size == 0 || stride == 0)
    throw ParamError("maxpool1d: size/stride must be positive");
}

Tensor MaxPool1d::forward(const Tensor& x, bool, Rng&) {
  if (x.cols() < size_)
    throw ShapeError(fmt::format("maxpool1d: input length {} shorter than pool size {}",
                                 x.cols(), size_));
  in_shape_ = {x.rows(), x.cols()};
  const std::size_t M = (x.cols() - size_) / stride_ + 1;
  Tensor out(x.rows(), M);
  argmax_.assign(x.rows() * M, 0);
  for (std::size_t c = 0; c < x.rows(); ++c) {
    for (std::size_t t = 0; t < M; ++t) {
      std::size_t best_j = t * stride_;
      double best = x.at(c, best_j);
      for (std::size_t j = 1; j < size_; ++j) {
        // strict > keeps the first index on ties
        if (x.at(c, t * stride_ + j) > best) {
          best = x.at(c, t * stride_ + j);
          best_j = t * stride_ + j;
        }
      }
      out.at(c, t) = best;
      argmax_[c * M + t] = c * x.cols() + best_j;
    }
  }
  return out;
}

Tensor MaxPool1d::backward(const Tensor& dy) {
  Tensor dx(in_shape_[0], in_shape_[1]);
  if (dy.size() != argmax_.size()) throw ShapeError("maxpool1d backward: shape mismatch");
  for (std::size_t i = 0; i < argmax_.size(); ++i) dx[argmax_[i]] += dy[i];
  return dx;
}

Shape MaxPool1d::output_shape(Shape in) const {
  if (in[1] < size_)
    throw ShapeError(fmt::format("maxpool1d: input length {} shorter than pool size {}",
                                 in[1], size_));
  return {in[0], (in[1] - size_) / stride_ + 1};
}

std::string MaxPool1d::describe() const {
  return fmt::format("maxpool1d(size={}, stride={})", size_, stride_);
}

Lstm::Lstm(std::size_t input_dim, std::size_t units, bool return_sequences,
           bool peephole, Rng& rng, bool forget_bias_one)
    : return_sequences_(return_sequences) {
  if (input_dim == 0 || units == 0)
    throw ParamError("lstm: input dim and units must be positive");
  cell_ = make_lstm_cell(input_dim, units, peephole);
  for (Tensor* p : {&cell_.P_i, &cell_.P_o, &cell_.P_f, &cell_.P_c})
    glorot_init(*p, input_dim, units, rng);
  for (Tensor* q : {&cell_.Q_i, &cell_.Q_o, &cell_.Q_f, &cell_.Q_c})
    glorot_init(*q, units, units, rng);
  // Peephole vectors start at zero: the cell behaves conventionally at init
  // and learns how much cell state the gates should see.
  if (forget_bias_one)
    for (double& v : cell_.b_f.values()) v = 1.0;
  for (Tensor* t : {&cell_.P_i, &cell_.P_o, &cell_.P_f, &cell_.P_c, &cell_.Q_i,
                    &cell_.Q_o, &cell_.Q_f, &cell_.Q_c, &cell_.b_i, &cell_.b_o,
                    &cell_.b_f, &cell_.b_c})
    t->ensure_grad();
  if (peephole)
    for (Tensor* t : {&cell_.R_i, &cell_.R_o, &cell_.R_f}) t->ensure_grad();
}

Tensor Lstm::forward(const Tensor& x, bool, Rng&) {
  if (x.rows() != cell_.input_dim)
    throw ShapeError(fmt::format("lstm: expected {} input rows, got {}",
                                 cell_.input_dim, x.rows()));
  if (x.cols() == 0) throw ShapeError("lstm: empty sequence");
  const std::size_t T = x.cols();
  const std::size_t U = cell_.units;
  x_ = x;
  for (Tensor* t : {&i_, &f_, &o_, &chat_, &c_, &tc_, &h_}) *t = Tensor(T, U);

  std::vector<double> x_t(cell_.input_dim);
  const std::vector<double> zeros(U, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < cell_.input_dim; ++d) x_t[d] = x.at(d, t);
    std::span<const double> h_prev =
        t == 0 ? std::span<const double>(zeros) : h_.values().subspan((t - 1) * U, U);
    std::span<const double> c_prev =
        t == 0 ? std::span<const double>(zeros) : c_.values().subspan((t - 1) * U, U);
    lstm_step_core(cell_, x_t, h_prev, c_prev,
                   {i_.values().subspan(t * U, U), f_.values().subspan(t * U, U),
                    o_.values().subspan(t * U, U), chat_.values().subspan(t * U, U),
                    c_.values().subspan(t * U, U), tc_.values().subspan(t * U, U),
                    h_.values().subspan(t * U, U)});
  }

  if (return_sequences_) {
    Tensor out(U, T);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u < U; ++u) out.at(u, t) = h_.at(t, u);
    return out;
  }
  Tensor out = Tensor::vec(U);
  std::copy_n(&h_.values()[(T - 1) * U], U, out.values().begin());
  return out;
}

Tensor Lstm::backward(const Tensor& dy) {
  const std::size_t T = x_.cols();
  const std::size_t U = cell_.units;
  if (return_sequences_) {
    if (dy.rows() != U || dy.cols() != T)
      throw ShapeError("lstm backward: shape mismatch");
  } else if (dy.size() != U) {
    throw ShapeError("lstm backward: shape mismatch");
  }

  Tensor dx(x_.rows(), T);
  std::vector<double> dh_acc(U, 0.0), dc_acc(U, 0.0);
  std::vector<double> dh(U), dc(U), da_i(U), da_f(U), da_o(U), da_c(U);
  std::vector<double> x_t(cell_.input_dim), dx_t(cell_.input_dim);
  const std::vector<double> zeros(U, 0.0);

  for (std::size_t ti = T; ti-- > 0;) {
    auto i = i_.values().subspan(ti * U, U);
    auto f = f_.values().subspan(ti * U, U);
    auto o = o_.values().subspan(ti * U, U);
    auto chat = chat_.values().subspan(ti * U, U);
    auto c = c_.values().subspan(ti * U, U);
    auto tc = tc_.values().subspan(ti * U, U);
    std::span<const double> h_prev =
        ti == 0 ? std::span<const double>(zeros) : h_.values().subspan((ti - 1) * U, U);
    std::span<const double> c_prev =
        ti == 0 ? std::span<const double>(zeros) : c_.values().subspan((ti - 1) * U, U);

    for (std::size_t u = 0; u < U; ++u) {
      dh[u] = dh_acc[u];
      if (return_sequences_)
        dh[u] += dy.at(u, ti);
      else if (ti == T - 1)
        dh[u] += dy[u];
    }
    for (std::size_t u = 0; u < U; ++u) {
      da_o[u] = dh[u] * tc[u] * o[u] * (1.0 - o[u]);
      dc[u] = dh[u] * o[u] * (1.0 - tc[u] * tc[u]) + dc_acc[u];
      if (cell_.peephole) dc[u] += cell_.R_o[u] * da_o[u];
      da_i[u] = dc[u] * chat[u] * i[u] * (1.0 - i[u]);
      da_f[u] = dc[u] * c_prev[u] * f[u] * (1.0 - f[u]);
      da_c[u] = dc[u] * i[u] * (1.0 - chat[u] * chat[u]);
      dc_acc[u] = dc[u] * f[u];
      if (cell_.peephole)
        dc_acc[u] += cell_.R_i[u] * da_i[u] + cell_.R_f[u] * da_f[u];
    }

    std::ranges::fill(dh_acc, 0.0);
    gemv_t_acc(cell_.Q_i, da_i, dh_acc);
    gemv_t_acc(cell_.Q_f, da_f, dh_acc);
    gemv_t_acc(cell_.Q_o, da_o, dh_acc);
    gemv_t_acc(cell_.Q_c, da_c, dh_acc);

    for (std::size_t d = 0; d < cell_.input_dim; ++d) x_t[d] = x_.at(d, ti);
    outer_acc(cell_.P_i, da_i, x_t);
    outer_acc(cell_.P_f, da_f, x_t);
    outer_acc(cell_.P_o, da_o, x_t);
    outer_acc(cell_.P_c, da_c, x_t);
    outer_acc(cell_.Q_i, da_i, h_prev);
    outer_acc(cell_.Q_f, da_f, h_prev);
    outer_acc(cell_.Q_o, da_o, h_prev);
    outer_acc(cell_.Q_c, da_c, h_prev);
    auto acc_bias = [U](Tensor& b, std::span<const double> da) {
      auto g = b.grad();
      for (std::size_t u = 0; u < U; ++u) g[u] += da[u];
    };
    acc_bias(cell_.b_i, da_i);
    acc_bias(cell_.b_f, da_f);
    acc_bias(cell_.b_o, da_o);
    acc_bias(cell_.b_c, da_c);
    if (cell_.peephole) {
      auto ri = cell_.R_i.grad();
      auto rf = cell_.R_f.grad();
      auto ro = cell_.R_o.grad();
      for (std::size_t u = 0; u < U; ++u) {
        ri[u] += da_i[u] * c_prev[u];
        rf[u] += da_f[u] * c_prev[u];
        ro[u] += da_o[u] * c[u];
      }
    }

    std::ranges::fill(dx_t, 0.0);
    gemv_t_acc(cell_.P_i, da_i, dx_t);
    gemv_t_acc(cell_.P_f, da_f, dx_t);
    gemv_t_acc(cell_.P_o, da_o, dx_t);
    gemv_t_acc(cell_.P_c, da_c, dx_t);
    for (std::size_t d = 0; d < cell_.input_dim; ++d) dx.at(d, ti) = dx_t[d];
  }
  return dx;
}

void Lstm::collect_params(std::vector<Tensor*>& out) {
  for (Tensor* t : {&cell_.P_i, &cell_.P_o, &cell_.P_f, &cell_.P_c, &cell_.Q_i,
                    &cell_.Q_o, &cell_.Q_f, &cell_.Q_c})
    out.push_back(t);
  if (cell_.peephole)
    for (Tensor* t : {&cell_.R_i, &cell_.R_o, &cell_.R_f}) out.push_back(t);
  for (Tensor* t : {&cell_.b_i, &cell_.b_o, &cell_.b_f, &cell_.b_c})
    out.push_back(t);
}

Shape Lstm::output_shape(Shape in) const {
  if (in[0] != cell_.input_dim)
    throw ShapeError(fmt::format("lstm: expected {} input rows, got {}",
                                 cell_.input_dim, in[0]));
  if (in[1] == 0) throw ShapeError("lstm: empty sequence");
  return {cell_.units, return_sequences_ ? in[1] : 1};
}

std::string Lstm::describe() const {
  return fmt::format("lstm(units={}, seq={}, peephole={})", cell_.units,
                     return_sequences_, cell_.peephole);
}

Dense::Dense(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng)
    : in_dim_(in_dim), out_dim_(out_dim), act_(act) {
  if (in_dim == 0 || out_dim == 0)
    throw ParamError("dense: dimensions must be positive");
  w_ = Tensor(out_dim, in_dim);
  glorot_init(w_, in_dim, out_dim, rng);
  b_ = Tensor::vec(out_dim);
  w_.ensure_grad();
  b_.ensure_grad();
}

Tensor Dense::forward(const Tensor& x, bool, Rng&) {
  if (x.cols() != 1 || x.rows() != in_dim_)
    throw ShapeError(fmt::format("dense: expected {}x1 input, got {}x{}", in_dim_,
                                 x.rows(), x.cols()));
  x_ = x;
  pre_ = Tensor::vec(out_dim_);
  std::ranges::copy(b_.values(), pre_.values().begin());
  gemv_acc(w_, x.values(), pre_.values());
  Tensor out = pre_;
  apply_activation(out, act_);
  return out;
}

Tensor Dense::backward(const Tensor& dy) {
  if (dy.size() != out_dim_) throw ShapeError("dense backward: shape mismatch");
  Tensor da = dy;
  if (act_ == Activation::relu)
    for (std::size_t i = 0; i < out_dim_; ++i)
      if (pre_[i] <= 0.0) da[i] = 0.0;
  outer_acc(w_, da.values(), x_.values());
  auto gb = b_.grad();
  for (std::size_t i = 0; i < out_dim_; ++i) gb[i] += da[i];
  Tensor dx = Tensor::vec(in_dim_);
  gemv_t_acc(w_, da.values(), dx.values());
  return dx;
}

void Dense::collect_params(std::vector<Tensor*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

Shape Dense::output_shape(Shape in) const {
  if (in[0] != in_dim_ || in[1] != 1)
    throw ShapeError(fmt::format("dense: expected {}x1 input, got {}x{}", in_dim_,
                                 in[0], in[1]));
  return {out_dim_, 1};
}

std::string Dense::describe() const {
  return fmt::format("dense(units={}, act={})", out_dim_, activation_name(act_));
}

Dropout::Dropout(double rate) : rate_(rate) {
  if (rate < 0.0 || rate >= 1.0) throw ParamError("dropout: rate must be in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, bool training, Rng& rng) {
  if (!training || rate_ == 0.0) {
    masked_ = false;
    return x;
  }
  masked_ = true;
  mask_ = Tensor(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - rate_);
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = rng.uniform() < rate_ ? 0.0 : scale;
    out[i] *= mask_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& dy) {
  if (!masked_) return dy;
  if (!dy.same_shape(mask_)) throw ShapeError("dropout backward: shape mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
  return dx;
}

Shape Dropout::output_shape(Shape in) const { return in; }

std::string Dropout::describe() const {
  return fmt::format("dropout(rate={})", rate_);
}

Tensor Flatten::forward(const Tensor& x, bool, Rng&) {
  in_shape_ = {x.rows(), x.cols()};
  Tensor out = Tensor::vec(x.size());
  std::ranges::copy(x.values(), out.values().begin());
  return out;
}

Tensor Flatten::backward(const Tensor& dy) {
  if (dy.size() != in_shape_[0] * in_shape_[1])
    throw ShapeError("flatten backward: shape mismatch");
  Tensor dx(in_shape_[0], in_shape_[1]);
  std::ranges::copy(dy.values(), dx.values().begin());
  return dx;
}

Shape Flatten::output_shape(Shape in) const { return {in[0] * in[1], 1}; }

std::string Flatten::describe() const { return "flatten"; }

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur, training, rng_);
  return cur;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    cur = (*it)->backward(cur);
  return cur;
}

std::vector<Tensor*> Sequential::params() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) layer->collect_params(out);
  return out;
}

std::size_t Sequential::parameter_count() {
  std::size_t n = 0;
  for (Tensor* p : params()) n += p->size();
  return n;
}

void Sequential::zero_grads() {
  for (Tensor* p : params()) p->zero_grad();
}

Shape Sequential::output_shape(Shape in) const {
  for (const auto& layer : layers_) in = layer->output_shape(in);
  return in;
}

std::vector<Shape> Sequential::shape_chain(Shape in) const {
  std::vector<Shape> chain{in};
  for (const auto& layer : layers_) {
    in = layer->output_shape(in);
    chain.push_back(in);
  }
  return chain;
}

void glorot_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
}

void TrainState::attach(const std::vector<Tensor*>& params) {
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.emplace_back(p->size(), 0.0);
    v.emplace_back(p->size(), 0.0);
  }
  step = 0;
}

void adam_step(TrainState& state, const std::vector<Tensor*>& params) {
  if (state.m.size() != params.size())
    throw ParamError("adam_step: state not attached to these parameters");
  const double lr_t = state.lr / (1.0 + state.decay * static_cast<double>(state.step));
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    if (!p.has_grad()) throw ParamError("adam_step: parameter missing gradient");
    auto g = p.grad();
    auto& mm = state.m[pi];
    auto& vv = state.v[pi];
    if (mm.size() != p.size()) throw ShapeError("adam_step: moment shape mismatch");
    auto w = p.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mm[i] = state.beta1 * mm[i] + (1.0 - state.beta1) * g[i];
      vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = mm[i] / bc1;
      const double vhat = vv[i] / bc2;
      w[i] -= lr_t * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

double gradcheck(Sequential& model, const Tensor& input, int label, double eps) {
  auto params = model.params();
  model.zero_grads();
  const XentResult base = softmax_xent(model.forward(input, false), label);
  model.backward(base.grad);

  std::vector<std::vector<double>> analytic;
  for (Tensor* p : params)
    analytic.emplace_back(p->grad().begin(), p->grad().end());

  const auto loss_at = [&] {
    return softmax_xent(model.forward(input, false), label).loss;
  };

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto w = params[pi]->values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double lp = loss_at();
      w[i] = orig - eps;
      const double lm = loss_at();
      w[i] = orig;
      const double gn = (lp - lm) / (2.0 * eps);
      const double ga = analytic[pi][i];
      const double rel =
          std::abs(ga - gn) / std::max({1e-2, std::abs(ga), std::abs(gn)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace szeeg::nn
