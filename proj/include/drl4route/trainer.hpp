#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "drl4route/agent.hpp"
#include "drl4route/core.hpp"
#include "drl4route/errors.hpp"
#include "drl4route/kv.hpp"
#include "drl4route/metrics.hpp"
#include "drl4route/numerics/layers.hpp"
#include "drl4route/numerics/tape.hpp"
#include "drl4route/reward.hpp"

namespace drl4route::trainer {

using agent::ModelConfig;
using numerics::Matrix;
using numerics::ParameterStore;
using numerics::Tape;
using numerics::Var;

enum class Method { kCrossEntropy, kReinforce, kActorCritic, kGae };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kCrossEntropy: return "ce";
    case Method::kReinforce: return "reinforce";
    case Method::kActorCritic: return "ac";
    case Method::kGae: return "gae";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "ce") return Method::kCrossEntropy;
  if (s == "reinforce") return Method::kReinforce;
  if (s == "ac") return Method::kActorCritic;
  if (s == "gae") return Method::kGae;
  throw InputError("unknown method '" + s + "' (expected ce|reinforce|ac|gae)");
}

struct TrainConfig {
  Method method = Method::kGae;
  double alpha_a = 0.3;
  double alpha_c = 0.1;
  double alpha_ce = 0.7;
  double lambda = 0.95;
  double gamma = 1.0;
  double r_bar = 20.0;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  std::size_t rollouts_per_sample = 1;
  bool advantage_norm = false;
  // Critic loss reaches only critic.* parameters when set.
  bool freeze_shared = false;
  // ac/gae only: epochs of critic-only regression on rollouts of the frozen
  // actor before joint training starts. Not logged.
  std::size_t critic_warmup_epochs = 0;
  ModelConfig model;

  reward::RewardConfig reward() const { return {r_bar, gamma}; }

  void validate() const {
    model.validate();
    reward().validate();
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0,1]");
    if (batch_size == 0) throw InputError("batch_size must be positive");
    if (!(lr > 0.0)) throw InputError("lr must be positive");
    if (rollouts_per_sample == 0) throw InputError("rollouts_per_sample must be positive");
    if (alpha_a < 0 || alpha_c < 0 || alpha_ce < 0) throw InputError("loss weights must be non-negative");
    if (method != Method::kCrossEntropy && std::abs(alpha_a + alpha_ce - 1.0) > 1e-9)
      throw InputError("alpha_a + alpha_ce must equal 1 when training jointly");
  }

  // Keys mirror the CLI flags; unknown keys are rejected.
  static TrainConfig from_kv(const kv::Map& m) { return from_kv(m, TrainConfig()); }

  static TrainConfig from_kv(const kv::Map& m, TrainConfig base) {
    TrainConfig c = base;
    for (const auto& [key, value] : m) {
      if (key == "method") c.method = parse_method(value);
      else if (key == "batch_size") c.batch_size = kv::to_size(key, value);
      else if (key == "lr") c.lr = kv::to_double(key, value);
      else if (key == "epochs") c.epochs = kv::to_size(key, value);
      else if (key == "alpha_a") c.alpha_a = kv::to_double(key, value);
      else if (key == "alpha_c") c.alpha_c = kv::to_double(key, value);
      else if (key == "alpha_ce") c.alpha_ce = kv::to_double(key, value);
      else if (key == "lambda") c.lambda = kv::to_double(key, value);
      else if (key == "gamma" || key == "reward.gamma") c.gamma = kv::to_double(key, value);
      else if (key == "r_bar" || key == "reward.r_bar") c.r_bar = kv::to_double(key, value);
      else if (key == "seed") c.seed = kv::to_size(key, value);
      else if (key == "d_h") c.model.d_h = kv::to_size(key, value);
      else if (key == "n_head") c.model.n_head = kv::to_size(key, value);
      else if (key == "K") c.model.n_blocks = kv::to_size(key, value);
      else if (key == "N_max") c.model.n_max = kv::to_size(key, value);
      else if (key == "rollouts_per_sample") c.rollouts_per_sample = kv::to_size(key, value);
      else if (key == "advantage_norm") c.advantage_norm = kv::to_bool(key, value);
      else if (key == "freeze_shared") c.freeze_shared = kv::to_bool(key, value);
      else if (key == "critic_warmup_epochs") c.critic_warmup_epochs = kv::to_size(key, value);
      else throw InputError("unknown config key '" + key + "'");
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Advantage estimation

// Sum over t' >= t of (gamma*lambda)^{t'-t} * delta_{t'}, with the value after
// the last step taken as 0.
inline std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                          double gamma, double lambda) {
  if (rewards.size() != values.size()) throw InputError("rewards and values differ in length");
  std::vector<double> adv(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double next_v = t + 1 < values.size() ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_v - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

// r_t + gamma V(s_{t+1}) - V(s_t).
inline std::vector<double> one_step_advantages(std::span<const double> rewards, std::span<const double> values,
                                               double gamma) {
  if (rewards.size() != values.size()) throw InputError("rewards and values differ in length");
  std::vector<double> adv(rewards.size());
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    const double next_v = t + 1 < values.size() ? values[t + 1] : 0.0;
    adv[t] = rewards[t] + gamma * next_v - values[t];
  }
  return adv;
}

// ---------------------------------------------------------------------------
// Losses (minimization targets)

// -(1/N) * sum_t log pi(a_t|s_t) * A_t for one trajectory; advantages are constants.
inline Var actor_loss(Tape& t, std::span<const Var> chosen_log_probs, std::span<const double> advantages,
                      double batch_size) {
  if (chosen_log_probs.size() != advantages.size()) throw InputError("log-probs and advantages differ in length");
  std::vector<Var> terms;
  terms.reserve(advantages.size());
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    if (!std::isfinite(advantages[i])) throw DivergenceError("non-finite advantage");
    terms.push_back(numerics::scale(chosen_log_probs[i], -advantages[i] / batch_size));
  }
  return numerics::add_all(t, terms);
}

// (1/N) * sum_t smoothL1(b_t - G_t). values is a k x 1 column.
inline Var critic_loss(Tape& t, Var values, std::span<const double> returns, double batch_size) {
  if (static_cast<std::size_t>(values.rows()) != returns.size() || values.cols() != 1)
    throw InputError("values and returns differ in length");
  Matrix g(values.rows(), 1);
  for (std::size_t i = 0; i < returns.size(); ++i) g(static_cast<Eigen::Index>(i), 0) = returns[i];
  Var resid = numerics::sub(values, t.constant(std::move(g)));
  return numerics::scale(numerics::sum(numerics::smooth_l1(resid)), 1.0 / batch_size);
}

// -(1/N) * sum_{t<=m} log P(y_t) under teacher forcing along the label.
inline Var ce_loss(Tape& t, ParameterStore& params, const agent::DecoderContext& ctx, const RouteLabel& label,
                   double batch_size) {
  auto replay = agent::replay_on_tape(t, params, ctx, label.order);
  Var total = numerics::add_all(t, replay.chosen_log_probs);
  return numerics::scale(total, -1.0 / batch_size);
}

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Matrix> m_, v_;
  long long t_ = 0;
};

// ---------------------------------------------------------------------------
// Logs

struct EpochRow {
  std::size_t epoch = 0;
  double mean_reward = std::numeric_limits<double>::quiet_NaN();
  double loss_actor = std::numeric_limits<double>::quiet_NaN();
  double loss_critic = std::numeric_limits<double>::quiet_NaN();
  double loss_ce = std::numeric_limits<double>::quiet_NaN();
  double val_lsd = std::numeric_limits<double>::quiet_NaN();
  double val_krc = std::numeric_limits<double>::quiet_NaN();
  double val_acc3 = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;  // not serialized; runs must stay byte-identical
};

struct TrainLog {
  Method method = Method::kCrossEntropy;
  std::vector<EpochRow> rows;

  static constexpr const char* kHeader = "epoch,mean_reward,loss_actor,loss_critic,loss_ce,val_lsd,val_krc,val_acc3";

  std::string to_csv() const {
    std::ostringstream os;
    os << kHeader << '\n';
    for (const auto& r : rows) {
      os << r.epoch << ',' << num(r.mean_reward) << ',' << num(r.loss_actor) << ',' << num(r.loss_critic) << ','
         << num(r.loss_ce) << ',' << num(r.val_lsd) << ',' << num(r.val_krc) << ',' << num(r.val_acc3) << '\n';
    }
    return os.str();
  }

  void write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << to_csv();
  }

  static std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
};

// (epoch, mean_reward) pairs from a TrainLog CSV; errors name the line.
inline std::vector<std::pair<std::size_t, double>> read_reward_column(std::istream& in) {
  std::vector<std::pair<std::size_t, double>> out;
  std::string line;
  std::size_t lineno = 0;
  int epoch_col = -1, reward_col = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (epoch_col < 0) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "epoch") epoch_col = static_cast<int>(i);
        if (cells[i] == "mean_reward") reward_col = static_cast<int>(i);
      }
      if (epoch_col < 0 || reward_col < 0)
        throw FormatError("header lacks epoch/mean_reward columns", static_cast<long long>(lineno));
      continue;
    }
    const auto need = static_cast<std::size_t>(std::max(epoch_col, reward_col));
    if (cells.size() <= need) throw FormatError("too few columns", static_cast<long long>(lineno));
    try {
      std::size_t used = 0;
      const auto e = std::stoull(cells[static_cast<std::size_t>(epoch_col)], &used);
      if (used != cells[static_cast<std::size_t>(epoch_col)].size()) throw std::invalid_argument("epoch");
      const std::string& rv = cells[static_cast<std::size_t>(reward_col)];
      const double r = rv == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(rv, &used);
      if (rv != "nan" && used != rv.size()) throw std::invalid_argument("reward");
      out.emplace_back(static_cast<std::size_t>(e), r);
    } catch (const std::exception&) {
      throw FormatError("malformed number", static_cast<long long>(lineno));
    }
  }
  if (epoch_col < 0) throw FormatError("empty log", 0);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

inline std::vector<RoutePermutation> predict_all(std::span<const Sample> samples, ParameterStore& params,
                                                 const ModelConfig& cfg) {
  std::vector<RoutePermutation> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(agent::predict(s, params, cfg));
  return out;
}

inline void fill_validation(EpochRow& row, std::span<const Sample> val, ParameterStore& params, const ModelConfig& cfg) {
  if (val.empty()) return;
  const auto preds = predict_all(val, params, cfg);
  const auto report = metrics::evaluate_dataset(val, preds, metrics::kFullBucket);
  row.val_lsd = report.lsd;
  row.val_krc = report.krc;
  row.val_acc3 = report.acc3;
}

namespace detail {

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over a combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(mix(seed, epoch));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline bool all_finite(const ParameterStore& params) {
  for (const auto& p : params)
    if (!p.grad.allFinite()) return false;
  return true;
}

}  // namespace detail

struct StepLosses {
  double actor = 0.0;
  double critic = 0.0;
  double ce = 0.0;
  double episode_reward = 0.0;  // summed over rollouts in the batch
  std::size_t episodes = 0;
};

// Builds and backpropagates the joint loss for one sample; gradients are
// accumulated into params. Returns unweighted loss components.
inline StepLosses accumulate_sample(const Sample& sample, ParameterStore& params, const TrainConfig& cfg,
                                    double batch_size, std::mt19937_64& rng) {
  StepLosses out;
  Tape t;
  auto ctx = agent::make_context(t, params, agent::encode(t, params, cfg.model, sample));
  std::vector<Var> terms;

  Var ce = ce_loss(t, params, ctx, sample.label, batch_size);
  out.ce = ce.scalar();
  if (cfg.method == Method::kCrossEntropy) {
    terms.push_back(ce);
  } else {
    if (cfg.alpha_ce != 0.0) terms.push_back(numerics::scale(ce, cfg.alpha_ce));
    const auto rcfg = cfg.reward();
    const double per = batch_size * static_cast<double>(cfg.rollouts_per_sample);
    for (std::size_t k = 0; k < cfg.rollouts_per_sample; ++k) {
      auto roll = agent::rollout_on_tape(t, params, ctx, agent::DecodeMode::kSample, rng);
      auto& traj = roll.trajectory;
      traj.rewards = reward::route_rewards(traj.actions, sample.label.order, rcfg);
      const auto returns = reward::discounted_returns(traj.rewards, rcfg.gamma);
      traj.final_return = std::accumulate(traj.rewards.begin(), traj.rewards.end(), 0.0);
      out.episode_reward += traj.final_return;
      ++out.episodes;

      if (cfg.method == Method::kReinforce) {
        traj.advantages.assign(traj.actions.size(), returns.front());
      } else {
        Var values = agent::critic_on_tape(t, params, cfg.model, roll.step_log_probs, cfg.freeze_shared);
        traj.values.resize(traj.actions.size());
        for (std::size_t i = 0; i < traj.values.size(); ++i) traj.values[i] = values.value()(static_cast<Eigen::Index>(i), 0);
        const double lam = cfg.method == Method::kActorCritic ? 0.0 : cfg.lambda;
        traj.advantages = gae_advantages(traj.rewards, traj.values, rcfg.gamma, lam);
        Var lc = critic_loss(t, values, returns, per);
        out.critic += lc.scalar();
        if (cfg.alpha_c != 0.0) terms.push_back(numerics::scale(lc, cfg.alpha_c));
      }
      if (cfg.advantage_norm && traj.advantages.size() > 1) {
        const double mean = std::accumulate(traj.advantages.begin(), traj.advantages.end(), 0.0) /
                            static_cast<double>(traj.advantages.size());
        double var = 0.0;
        for (double a : traj.advantages) var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / static_cast<double>(traj.advantages.size())) + 1e-8;
        for (double& a : traj.advantages) a = (a - mean) / sd;
      }
      Var la = actor_loss(t, roll.chosen_log_probs, traj.advantages, per);
      out.actor += la.scalar();
      if (cfg.alpha_a != 0.0) terms.push_back(numerics::scale(la, cfg.alpha_a));
    }
  }
  Var loss = numerics::add_all(t, terms);
  if (!std::isfinite(loss.scalar())) throw DivergenceError("non-finite loss");
  if (t.needs_grad(loss.id)) t.backward(loss);
  return out;
}

namespace detail {

inline constexpr std::uint64_t kWarmupSalt = 0x5bd1e995c0ffee11ULL;

// Critic-only pass: the actor is frozen and only critic.* parameters get gradients.
inline void warm_up_critic(std::span<const Sample> data, ParameterStore& params, const TrainConfig& cfg) {
  const auto rcfg = cfg.reward();
  const std::uint64_t seed = cfg.seed ^ kWarmupSalt;
  Adam opt(cfg.lr);
  const ParameterStore start = params;
  for (std::size_t epoch = 1; epoch <= cfg.critic_warmup_epochs; ++epoch) {
    const auto order = epoch_order(data.size(), seed, epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double per = static_cast<double>(end - begin) * static_cast<double>(cfg.rollouts_per_sample);
      params.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const Sample& sample = data[order[k]];
        std::mt19937_64 rng(mix(mix(seed, epoch), order[k]));
        Tape t;
        auto ctx = agent::make_context(t, params, agent::encode(t, params, cfg.model, sample));
        for (std::size_t r = 0; r < cfg.rollouts_per_sample; ++r) {
          auto roll = agent::rollout_on_tape(t, params, ctx, agent::DecodeMode::kSample, rng);
          const auto rewards = reward::route_rewards(roll.trajectory.actions, sample.label.order, rcfg);
          const auto returns = reward::discounted_returns(rewards, rcfg.gamma);
          Var lc = critic_loss(t, agent::critic_on_tape(t, params, cfg.model, roll.step_log_probs, true), returns, per);
          if (!std::isfinite(lc.scalar())) {
            params = start;
            throw DivergenceError("non-finite critic loss during warm-up");
          }
          t.backward(lc);
        }
      }
      if (!all_finite(params)) {
        params = start;
        throw DivergenceError("non-finite gradient during critic warm-up");
      }
      opt.step(params);
    }
  }
}

}  // namespace detail

// Runs cfg.epochs epochs of mini-batch training. Method ce is the pretraining
// phase; the RL methods expect params already pretrained. On a non-finite
// loss the parameters are restored to the last completed epoch and
// DivergenceError is thrown.
inline TrainLog run_training(std::span<const Sample> data, std::span<const Sample> val, ParameterStore& params,
                             const TrainConfig& cfg, const std::function<void(const EpochRow&)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw InputError("empty training dataset");
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!is_valid(data[i])) throw InputError("training sample " + std::to_string(i) + " is invalid");

  if (cfg.method == Method::kActorCritic || cfg.method == Method::kGae) detail::warm_up_critic(data, params, cfg);

  TrainLog log;
  log.method = cfg.method;
  Adam opt(cfg.lr);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const ParameterStore last_good = params;
    const auto order = detail::epoch_order(data.size(), cfg.seed, epoch);
    double sum_actor = 0, sum_critic = 0, sum_ce = 0, sum_reward = 0;
    std::size_t batches = 0, episodes = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const double n = static_cast<double>(end - start);
        params.zero_grad();
        StepLosses batch;
        for (std::size_t k = start; k < end; ++k) {
          std::mt19937_64 rng(detail::mix(detail::mix(cfg.seed, epoch), order[k]));
          auto s = accumulate_sample(data[order[k]], params, cfg, n, rng);
          batch.actor += s.actor;
          batch.critic += s.critic;
          batch.ce += s.ce;
          batch.episode_reward += s.episode_reward;
          batch.episodes += s.episodes;
        }
        if (!detail::all_finite(params)) throw DivergenceError("non-finite gradient");
        opt.step(params);
        sum_actor += batch.actor;
        sum_critic += batch.critic;
        sum_ce += batch.ce;
        sum_reward += batch.episode_reward;
        episodes += batch.episodes;
        ++batches;
      }
    } catch (const DivergenceError&) {
      params = last_good;
      throw;
    }
    EpochRow row;
    row.epoch = epoch;
    const double nb = static_cast<double>(batches);
    row.loss_ce = sum_ce / nb;
    if (cfg.method != Method::kCrossEntropy) {
      row.loss_actor = sum_actor / nb;
      if (cfg.method != Method::kReinforce) row.loss_critic = sum_critic / nb;
      row.mean_reward = sum_reward / static_cast<double>(episodes);
    }
    fill_validation(row, val, params, cfg.model);
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return log;
}

inline TrainLog pretrain(std::span<const Sample> data, std::span<const Sample> val, ParameterStore& params,
                         TrainConfig cfg, const std::function<void(const EpochRow&)>& on_epoch = {}) {
  cfg.method = Method::kCrossEntropy;
  return run_training(data, val, params, cfg, on_epoch);
}

inline TrainLog train(std::span<const Sample> data, std::span<const Sample> val, ParameterStore& params,
                      const TrainConfig& cfg, const std::function<void(const EpochRow&)>& on_epoch = {}) {
  if (cfg.method == Method::kCrossEntropy) throw InputError("train() expects an RL method; use pretrain() for ce");
  return run_training(data, val, params, cfg, on_epoch);
}

}  // namespace drl4route::trainer
