#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "drl4route/core.hpp"
#include "drl4route/errors.hpp"
#include "drl4route/kv.hpp"
#include "drl4route/numerics/layers.hpp"
#include "drl4route/numerics/parameter_store.hpp"
#include "drl4route/numerics/tape.hpp"

namespace drl4route::agent {

using numerics::LstmState;
using numerics::Matrix;
using numerics::ParameterStore;
using numerics::Tape;
using numerics::Var;

struct ModelConfig {
  std::size_t d_h = 32;
  std::size_t n_head = 4;
  std::size_t n_blocks = 2;
  std::size_t n_max = kMaxTasks;
  std::size_t d_feature = kFeatureDim;
  std::uint64_t seed = 1;

  void validate() const {
    if (d_h == 0 || n_head == 0 || d_h % n_head != 0) throw InputError("d_h must be a positive multiple of n_head");
    if (n_max == 0 || n_max > kMaxTasks) throw InputError("N_max must lie in [1, 25]");
    if (d_feature != kFeatureDim) throw InputError("d_feature is fixed at 8");
  }

  // Sidecar metadata written next to checkpoints.
  std::string to_kv() const {
    std::ostringstream os;
    os << "d_h=" << d_h << "\nn_head=" << n_head << "\nK=" << n_blocks << "\nN_max=" << n_max
       << "\nd_feature=" << d_feature << "\nseed=" << seed << '\n';
    return os.str();
  }

  static ModelConfig from_kv(const kv::Map& m) {
    ModelConfig c;
    for (const auto& [key, value] : m) {
      if (key == "d_h") c.d_h = kv::to_size(key, value);
      else if (key == "n_head") c.n_head = kv::to_size(key, value);
      else if (key == "K") c.n_blocks = kv::to_size(key, value);
      else if (key == "N_max") c.n_max = kv::to_size(key, value);
      else if (key == "d_feature") c.d_feature = kv::to_size(key, value);
      else if (key == "seed") c.seed = kv::to_size(key, value);
      else throw InputError("unknown model key '" + key + "'");
    }
    c.validate();
    return c;
  }
};

// Rough per-feature magnitudes of the synthetic data; keeps the first
// projection well conditioned. Order follows Task::features().
inline constexpr std::array<double, kFeatureDim> kFeatureScale = {10.0, 10.0, 10.0, 60.0, 60.0, 10.0, 5.0, 3.0};

inline ParameterStore init_params(const ModelConfig& cfg) {
  cfg.validate();
  ParameterStore s;
  numerics::Initializer init(cfg.seed, 1.0 / std::sqrt(static_cast<double>(cfg.d_h)));
  const std::size_t d = cfg.d_h;
  numerics::add_weight(s, "encoder.input.w", cfg.d_feature, d, init);
  numerics::add_bias(s, "encoder.input.b", d);
  for (std::size_t k = 0; k < cfg.n_blocks; ++k)
    numerics::add_mha_ffn_block(s, k, {cfg.d_h, cfg.n_head, 4}, init);
  numerics::add_lstm(s, "decoder.lstm", d, d, init);
  s.add("decoder.h0", {d}, init.uniform(1, d));
  s.add("decoder.c0", {d}, init.uniform(1, d));
  numerics::add_weight(s, "decoder.attn.w1", d, d, init);
  numerics::add_weight(s, "decoder.attn.w2", d, d, init);
  numerics::add_weight(s, "decoder.attn.v", d, 1, init);
  numerics::add_weight(s, "critic.fc1.w", cfg.n_max, d, init);
  numerics::add_bias(s, "critic.fc1.b", d);
  numerics::add_weight(s, "critic.fc2.w", d, 1, init);
  numerics::add_bias(s, "critic.fc2.b", 1);
  return s;
}

inline bool is_critic_param(const std::string& name) { return name.rfind("critic.", 0) == 0; }

inline Matrix feature_matrix(const Sample& sample) {
  Matrix x(static_cast<Eigen::Index>(sample.n()), static_cast<Eigen::Index>(kFeatureDim));
  for (std::size_t i = 0; i < sample.n(); ++i) {
    const auto f = sample.tasks[i].features();
    for (std::size_t j = 0; j < kFeatureDim; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j] / kFeatureScale[j];
  }
  return x;
}

// Task embeddings E (n x d_h): input projection, then K attention blocks.
// No positional encoding, so the encoder is permutation-equivariant.
inline Var encode(Tape& t, ParameterStore& params, const ModelConfig& cfg, const Sample& sample) {
  if (sample.n() == 0) throw InputError("cannot encode an empty task set");
  Var e = numerics::linear(t, params, t.constant(feature_matrix(sample)), "encoder.input");
  for (std::size_t k = 0; k < cfg.n_blocks; ++k) e = numerics::mha_ffn_block(t, params, e, k, cfg.n_head);
  return e;
}

struct DecoderState {
  std::size_t step = 1;  // 1-based step about to be decoded
  LstmState hidden;
  std::vector<TaskId> emitted;
  std::vector<bool> feasible;  // feasible[j] for task j+1
  Var last_input;              // recurrent input for the next step
};

struct StepResult {
  Var log_probs;  // 1 x n, -inf on masked tasks
  LstmState hidden;
};

// Holds the per-sample tensors shared by every decoding step.
struct DecoderContext {
  Var embeddings;  // n x d_h
  Var keys;        // E W1, precomputed once
  std::size_t n = 0;
};

inline DecoderContext make_context(Tape& t, ParameterStore& params, Var embeddings) {
  return {embeddings, numerics::matmul(embeddings, t.param(params, "decoder.attn.w1")),
          static_cast<std::size_t>(embeddings.rows())};
}

inline DecoderState initial_state(Tape& t, ParameterStore& params, const DecoderContext& ctx) {
  DecoderState s;
  s.hidden = {t.param(params, "decoder.h0"), t.param(params, "decoder.c0")};
  s.feasible.assign(ctx.n, true);
  s.last_input = numerics::mean_rows(ctx.embeddings);
  return s;
}

// u_j = v^T tanh(W1 e_j + W2 h_t) over feasible tasks, then a masked softmax.
inline StepResult decode_step(Tape& t, ParameterStore& params, const DecoderContext& ctx,
                              const DecoderState& state) {
  LstmState next = numerics::recurrent_step(t, params, state.last_input, state.hidden, "decoder.lstm");
  Var query = numerics::matmul(next.h, t.param(params, "decoder.attn.w2"));
  Var scores = numerics::matmul(numerics::tanh(numerics::add_row(ctx.keys, query)), t.param(params, "decoder.attn.v"));
  Var log_probs = numerics::masked_log_softmax(numerics::transpose(scores), state.feasible);
  return {log_probs, next};
}

inline void advance(DecoderState& state, const DecoderContext& ctx, const StepResult& step, TaskId chosen) {
  if (chosen < 1 || static_cast<std::size_t>(chosen) > ctx.n || !state.feasible[static_cast<std::size_t>(chosen) - 1])
    throw InputError("task " + std::to_string(chosen) + " is not feasible at step " + std::to_string(state.step));
  state.hidden = step.hidden;
  state.feasible[static_cast<std::size_t>(chosen) - 1] = false;
  state.emitted.push_back(chosen);
  state.last_input = numerics::row(ctx.embeddings, chosen - 1);
  ++state.step;
}

inline std::vector<double> probabilities(Var log_probs) {
  const Matrix& lp = log_probs.value();
  std::vector<double> p(static_cast<std::size_t>(lp.cols()));
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(lp(0, static_cast<Eigen::Index>(j)));
  return p;
}

// Lowest id wins ties.
inline TaskId greedy_choice(const std::vector<double>& probs, const std::vector<bool>& feasible) {
  std::size_t best = probs.size();
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!feasible[j]) continue;
    if (best == probs.size() || probs[j] > probs[best]) best = j;
  }
  if (best == probs.size()) throw NoFeasibleAction();
  return static_cast<TaskId>(best + 1);
}

inline TaskId sampled_choice(const std::vector<double>& probs, const std::vector<bool>& feasible,
                             std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last = probs.size();
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!feasible[j]) continue;
    last = j;
    acc += probs[j];
    if (r < acc) return static_cast<TaskId>(j + 1);
  }
  if (last == probs.size()) throw NoFeasibleAction();
  return static_cast<TaskId>(last + 1);  // rounding slack
}

enum class DecodeMode { kGreedy, kSample };

struct Trajectory {
  std::vector<TaskId> actions;
  std::vector<double> log_probs;
  std::vector<std::vector<double>> distributions;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
  double final_return = 0.0;

  RoutePermutation route() const { return {actions}; }
};

// Rollout whose per-step nodes stay on the tape for loss construction.
struct TapedRollout {
  Trajectory trajectory;
  std::vector<Var> step_log_probs;  // 1 x n per step
  std::vector<Var> chosen_log_probs;  // scalar per step
};

inline TapedRollout rollout_on_tape(Tape& t, ParameterStore& params, const DecoderContext& ctx, DecodeMode mode,
                                    std::mt19937_64& rng) {
  TapedRollout out;
  DecoderState state = initial_state(t, params, ctx);
  for (std::size_t step = 0; step < ctx.n; ++step) {
    StepResult r = decode_step(t, params, ctx, state);
    auto probs = probabilities(r.log_probs);
    const TaskId chosen = mode == DecodeMode::kGreedy ? greedy_choice(probs, state.feasible)
                                                      : sampled_choice(probs, state.feasible, rng);
    Var chosen_lp = numerics::pick(r.log_probs, 0, chosen - 1);
    out.trajectory.actions.push_back(chosen);
    out.trajectory.log_probs.push_back(chosen_lp.scalar());
    out.trajectory.distributions.push_back(std::move(probs));
    out.step_log_probs.push_back(r.log_probs);
    out.chosen_log_probs.push_back(chosen_lp);
    advance(state, ctx, r, chosen);
  }
  return out;
}

// Teacher-forced decoding along a fixed prefix; returns per-step scalar log-probs.
inline TapedRollout replay_on_tape(Tape& t, ParameterStore& params, const DecoderContext& ctx,
                                   std::span<const TaskId> route) {
  TapedRollout out;
  DecoderState state = initial_state(t, params, ctx);
  for (TaskId id : route) {
    StepResult r = decode_step(t, params, ctx, state);
    if (id < 1 || static_cast<std::size_t>(id) > ctx.n || !state.feasible[static_cast<std::size_t>(id) - 1])
      throw InputError("route is not valid for this sample");
    Var chosen_lp = numerics::pick(r.log_probs, 0, id - 1);
    out.trajectory.actions.push_back(id);
    out.trajectory.log_probs.push_back(chosen_lp.scalar());
    out.trajectory.distributions.push_back(probabilities(r.log_probs));
    out.step_log_probs.push_back(r.log_probs);
    out.chosen_log_probs.push_back(chosen_lp);
    advance(state, ctx, r, id);
  }
  return out;
}

inline Trajectory rollout(const Sample& sample, ParameterStore& params, const ModelConfig& cfg, DecodeMode mode,
                          std::uint64_t seed = 0) {
  Tape t(false);
  std::mt19937_64 rng(seed);
  auto ctx = make_context(t, params, encode(t, params, cfg, sample));
  return rollout_on_tape(t, params, ctx, mode, rng).trajectory;
}

inline RoutePermutation predict(const Sample& sample, ParameterStore& params, const ModelConfig& cfg) {
  return rollout(sample, params, cfg, DecodeMode::kGreedy).route();
}

// Critic: each step's distribution, zero-padded to N_max, through a two-layer
// regressor. Returns a k x 1 column of value estimates.
inline Var critic_on_tape(Tape& t, ParameterStore& params, const ModelConfig& cfg,
                          const std::vector<Var>& step_log_probs, bool detach_inputs = false) {
  std::vector<Var> rows;
  rows.reserve(step_log_probs.size());
  for (Var lp : step_log_probs) {
    if (static_cast<std::size_t>(lp.cols()) > cfg.n_max) throw InputError("distribution longer than N_max");
    Var p = numerics::exp(lp);
    if (detach_inputs) p = numerics::detach(p);
    rows.push_back(numerics::pad_cols(p, static_cast<Eigen::Index>(cfg.n_max)));
  }
  Var x = numerics::stack_rows(rows);
  Var hidden = numerics::tanh(numerics::linear(t, params, x, "critic.fc1"));
  return numerics::linear(t, params, hidden, "critic.fc2");
}

inline std::vector<double> critic_values(const std::vector<std::vector<double>>& distributions,
                                         ParameterStore& params, const ModelConfig& cfg) {
  if (distributions.empty()) return {};
  Tape t(false);
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(distributions.size()), static_cast<Eigen::Index>(cfg.n_max));
  for (std::size_t i = 0; i < distributions.size(); ++i) {
    if (distributions[i].size() > cfg.n_max) throw InputError("distribution longer than N_max");
    for (std::size_t j = 0; j < distributions[i].size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = distributions[i][j];
  }
  Var hidden = numerics::tanh(numerics::linear(t, params, t.constant(std::move(x)), "critic.fc1"));
  Var v = numerics::linear(t, params, hidden, "critic.fc2");
  std::vector<double> out(distributions.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.value()(static_cast<Eigen::Index>(i), 0);
  return out;
}

// Sum of teacher-forced log-probabilities along route.
inline double route_log_prob(const Sample& sample, std::span<const TaskId> route, ParameterStore& params,
                             const ModelConfig& cfg) {
  if (!is_permutation_of_n(route, sample.n())) throw InputError("route is not a permutation of the sample's tasks");
  Tape t(false);
  auto ctx = make_context(t, params, encode(t, params, cfg, sample));
  double total = 0.0;
  for (double lp : replay_on_tape(t, params, ctx, route).trajectory.log_probs) total += lp;
  return total;
}

}  // namespace drl4route::agent
