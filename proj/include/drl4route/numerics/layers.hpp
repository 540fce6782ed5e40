#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drl4route/errors.hpp"
#include "drl4route/numerics/parameter_store.hpp"
#include "drl4route/numerics/tape.hpp"

namespace drl4route::numerics {

inline double smooth_l1(double x) {
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

// Probabilities over feasible entries; infeasible entries are exactly 0.
inline std::vector<double> masked_softmax(std::span<const double> scores, const std::vector<bool>& feasible) {
  if (scores.size() != feasible.size()) throw InputError("scores and mask differ in length");
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!feasible[j]) continue;
    if (std::isnan(scores[j])) throw DivergenceError("NaN score in masked softmax");
    mx = std::max(mx, scores[j]);
    any = true;
  }
  if (!any) throw NoFeasibleAction();
  std::vector<double> p(scores.size(), 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!feasible[j]) continue;
    p[j] = std::exp(scores[j] - mx);
    z += p[j];
  }
  for (double& v : p) v /= z;
  return p;
}

// ---------------------------------------------------------------------------
// Parameter creation

class Initializer {
 public:
  Initializer(std::uint64_t seed, double bound) : rng_(seed), bound_(bound) {}

  Matrix uniform(std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<double> u(-bound_, bound_);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng_);
    return m;
  }

 private:
  std::mt19937_64 rng_;
  double bound_;
};

inline void add_weight(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out,
                       Initializer& init) {
  s.add(name, {in, out}, init.uniform(in, out));
}

inline void add_bias(ParameterStore& s, const std::string& name, std::size_t width, double fill = 0.0) {
  s.add(name, {width}, Matrix::Constant(1, static_cast<Eigen::Index>(width), fill));
}

// x W + b
inline Var linear(Tape& t, ParameterStore& s, Var x, const std::string& prefix) {
  return add_row(matmul(x, t.param(s, prefix + ".w")), t.param(s, prefix + ".b"));
}

inline constexpr double kBatchNormEps = 1e-9;

// Normalizes over the task axis, then applies the learned scale/shift.
inline Var batch_norm(Tape& t, ParameterStore& s, Var x, const std::string& prefix) {
  Var y = batch_norm_rows(x, kBatchNormEps);
  return add_row(mul_row(y, t.param(s, prefix + ".gamma")), t.param(s, prefix + ".beta"));
}

// ---------------------------------------------------------------------------
// Encoder block: e' = BN(e + MHA(e)); out = BN(e' + FFN(e')).

struct BlockShape {
  std::size_t d_h = 32;
  std::size_t n_head = 4;
  std::size_t ffn_mult = 4;
};

inline std::string block_prefix(std::size_t block_index) {
  return "encoder.block" + std::to_string(block_index);
}

inline void add_mha_ffn_block(ParameterStore& s, std::size_t block_index, const BlockShape& shape,
                              Initializer& init) {
  if (shape.n_head == 0 || shape.d_h % shape.n_head != 0)
    throw InputError("d_h must be divisible by n_head");
  const std::string p = block_prefix(block_index);
  const std::size_t d = shape.d_h, f = shape.ffn_mult * shape.d_h;
  add_weight(s, p + ".mha.wq", d, d, init);
  add_weight(s, p + ".mha.wk", d, d, init);
  add_weight(s, p + ".mha.wv", d, d, init);
  add_weight(s, p + ".mha.wo", d, d, init);
  add_bias(s, p + ".bn1.gamma", d, 1.0);
  add_bias(s, p + ".bn1.beta", d, 0.0);
  add_weight(s, p + ".ffn1.w", d, f, init);
  add_bias(s, p + ".ffn1.b", f);
  add_weight(s, p + ".ffn2.w", f, d, init);
  add_bias(s, p + ".ffn2.b", d);
  add_bias(s, p + ".bn2.gamma", d, 1.0);
  add_bias(s, p + ".bn2.beta", d, 0.0);
}

inline Var multi_head_attention(Tape& t, ParameterStore& s, Var e, const std::string& prefix,
                                std::size_t n_head) {
  const Eigen::Index d = e.cols();
  if (n_head == 0 || d % static_cast<Eigen::Index>(n_head) != 0)
    throw InputError("d_h must be divisible by n_head");
  const Eigen::Index dk = d / static_cast<Eigen::Index>(n_head);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Var q = matmul(e, t.param(s, prefix + ".wq"));
  Var k = matmul(e, t.param(s, prefix + ".wk"));
  Var v = matmul(e, t.param(s, prefix + ".wv"));
  std::vector<Var> heads;
  heads.reserve(n_head);
  for (std::size_t h = 0; h < n_head; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * dk;
    Var qh = slice_cols(q, off, dk), kh = slice_cols(k, off, dk), vh = slice_cols(v, off, dk);
    Var attn = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    heads.push_back(matmul(attn, vh));
  }
  return matmul(concat_cols(heads), t.param(s, prefix + ".wo"));
}

inline Var mha_ffn_block(Tape& t, ParameterStore& s, Var e, std::size_t block_index, std::size_t n_head) {
  const std::string p = block_prefix(block_index);
  if (e.cols() != t.param(s, p + ".mha.wq").rows())
    throw InputError("shape mismatch: embedding width vs " + p + ".mha.wq");
  Var attended = batch_norm(t, s, add(e, multi_head_attention(t, s, e, p + ".mha", n_head)), p + ".bn1");
  Var hidden = relu(linear(t, s, attended, p + ".ffn1"));
  Var ff = linear(t, s, hidden, p + ".ffn2");
  return batch_norm(t, s, add(attended, ff), p + ".bn2");
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate layout in the fused projection: input, forget, candidate, output.

struct LstmState {
  Var h;
  Var c;
};

inline void add_lstm(ParameterStore& s, const std::string& prefix, std::size_t in, std::size_t hidden,
                     Initializer& init) {
  add_weight(s, prefix + ".wx", in, 4 * hidden, init);
  add_weight(s, prefix + ".wh", hidden, 4 * hidden, init);
  Matrix b = Matrix::Zero(1, static_cast<Eigen::Index>(4 * hidden));
  b.middleCols(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(hidden)).setConstant(1.0);
  s.add(prefix + ".b", {4 * hidden}, std::move(b));
}

inline LstmState recurrent_step(Tape& t, ParameterStore& s, Var input, LstmState state,
                                const std::string& prefix) {
  Var wx = t.param(s, prefix + ".wx");
  Var wh = t.param(s, prefix + ".wh");
  const Eigen::Index hidden = wh.rows();
  if (input.rows() != 1 || input.cols() != wx.rows())
    throw InputError("shape mismatch: recurrent input vs " + prefix + ".wx");
  if (state.h.cols() != hidden || state.c.cols() != hidden || state.h.rows() != 1 || state.c.rows() != 1)
    throw InputError("shape mismatch: recurrent state vs " + prefix + ".wh");
  Var z = add(add(matmul(input, wx), matmul(state.h, wh)), t.param(s, prefix + ".b"));
  Var i = sigmoid(slice_cols(z, 0, hidden));
  Var f = sigmoid(slice_cols(z, hidden, hidden));
  Var g = tanh(slice_cols(z, 2 * hidden, hidden));
  Var o = sigmoid(slice_cols(z, 3 * hidden, hidden));
  Var c = add(cwise_mul(f, state.c), cwise_mul(i, g));
  Var h = cwise_mul(o, tanh(c));
  return {h, c};
}

}  // namespace drl4route::numerics
