#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "drl4route/core.hpp"
#include "drl4route/errors.hpp"

namespace drl4route::reward {

struct RewardConfig {
  double r_bar = 20.0;  // bonus for emitting a task at its exact label position
  double gamma = 1.0;

  void validate() const {
    if (!(r_bar > 0.0)) throw InputError("reward.r_bar must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError("reward.gamma must lie in [0,1]");
  }
};

enum class RewardCase {
  kOffLabelEarly,  // not in label, emitted within the first m steps
  kOffLabelLate,   // not in label, emitted after step m; ignored
  kMisplaced,      // in label, wrong step
  kExact,          // in label, right step
};

// step is 1-based.
inline RewardCase classify_step(TaskId task, std::size_t step, std::span<const TaskId> label) {
  const auto pos = order_index(label, task);
  if (!pos) return step <= label.size() ? RewardCase::kOffLabelEarly : RewardCase::kOffLabelLate;
  return *pos == step ? RewardCase::kExact : RewardCase::kMisplaced;
}

// Squared deviation against the task's label position; an off-label task
// emitted early is treated as if it belonged at position m+1.
inline double step_reward(TaskId task, std::size_t step, std::span<const TaskId> label,
                          const RewardConfig& cfg) {
  const double t = static_cast<double>(step);
  const double m = static_cast<double>(label.size());
  const auto pos = order_index(label, task);
  if (!pos) {
    if (step > label.size()) return 0.0;
    const double d = m + 1.0 - t;
    return -d * d;
  }
  if (*pos == step) return cfg.r_bar;
  const double d = static_cast<double>(*pos) - t;
  return -d * d;
}

inline std::vector<double> route_rewards(std::span<const TaskId> route, std::span<const TaskId> label,
                                         const RewardConfig& cfg) {
  std::vector<double> r(route.size());
  for (std::size_t t = 0; t < route.size(); ++t) r[t] = step_reward(route[t], t + 1, label, cfg);
  return r;
}

// G_t = sum_{t' >= t} gamma^{t'-t} r_{t'}.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

}  // namespace drl4route::reward
