#pragma once

// Independent scalar-loop reference for the peephole LSTM recurrence. Kept
// deliberately free of any shared helpers with the library implementation:
// plain per-element arithmetic only.

#include <cmath>
#include <vector>

#include "szeeg/nn.hpp"

namespace testsupport {

// Steps the recurrence over a time-major input (xs[t] has input_dim entries)
// from a zero initial state. Returns the hidden state after every step.
inline std::vector<std::vector<double>> lstm_scalar_run(
    const szeeg::nn::LstmCell& cell, const std::vector<std::vector<double>>& xs) {
  const std::size_t units = cell.units;
  const std::size_t dim = cell.input_dim;
  std::vector<double> h(units, 0.0), c(units, 0.0);
  std::vector<std::vector<double>> history;

  for (const std::vector<double>& x : xs) {
    std::vector<double> h_new(units), c_new(units);
    std::vector<double> i_gate(units), f_gate(units), cand(units);
    for (std::size_t k = 0; k < units; ++k) {
      double a_i = cell.b_i[k];
      double a_f = cell.b_f[k];
      double a_c = cell.b_c[k];
      for (std::size_t j = 0; j < dim; ++j) {
        a_i += cell.P_i.at(k, j) * x[j];
        a_f += cell.P_f.at(k, j) * x[j];
        a_c += cell.P_c.at(k, j) * x[j];
      }
      for (std::size_t j = 0; j < units; ++j) {
        a_i += cell.Q_i.at(k, j) * h[j];
        a_f += cell.Q_f.at(k, j) * h[j];
        a_c += cell.Q_c.at(k, j) * h[j];
      }
      if (cell.peephole) {
        a_i += cell.R_i[k] * c[k];
        a_f += cell.R_f[k] * c[k];
      }
      i_gate[k] = 1.0 / (1.0 + std::exp(-a_i));
      f_gate[k] = 1.0 / (1.0 + std::exp(-a_f));
      cand[k] = std::tanh(a_c);
    }
    for (std::size_t k = 0; k < units; ++k)
      c_new[k] = f_gate[k] * c[k] + i_gate[k] * cand[k];
    for (std::size_t k = 0; k < units; ++k) {
      double a_o = cell.b_o[k];
      for (std::size_t j = 0; j < dim; ++j) a_o += cell.P_o.at(k, j) * x[j];
      for (std::size_t j = 0; j < units; ++j) a_o += cell.Q_o.at(k, j) * h[j];
      if (cell.peephole) a_o += cell.R_o[k] * c_new[k];  // output gate sees the new cell
      const double o_gate = 1.0 / (1.0 + std::exp(-a_o));
      h_new[k] = o_gate * std::tanh(c_new[k]);
    }
    h = h_new;
    c = c_new;
    history.push_back(h);
  }
  return history;
}

inline std::vector<double> lstm_scalar_final_h(
    const szeeg::nn::LstmCell& cell, const std::vector<std::vector<double>>& xs) {
  return lstm_scalar_run(cell, xs).back();
}

}  // namespace testsupport
