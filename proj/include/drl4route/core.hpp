#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace drl4route {

// Tasks are identified by their 1-based index within a sample.
using TaskId = int;

inline constexpr std::size_t kFeatureDim = 8;
inline constexpr std::size_t kMaxTasks = 25;

struct Task {
  TaskId id = 0;
  double x = 0.0;
  double y = 0.0;
  double dist_to_worker = 0.0;
  double accept_elapsed = 0.0;
  double promise_remaining = 0.0;  // negative when overdue
  int aoi_id = 0;
  double weight = 0.0;
  int type_code = 0;

  // Field order is part of the model contract; id is excluded.
  std::array<double, kFeatureDim> features() const {
    return {x, y, dist_to_worker, accept_elapsed, promise_remaining,
            static_cast<double>(aoi_id), weight, static_cast<double>(type_code)};
  }

  bool operator==(const Task&) const = default;
};

struct RouteLabel {
  std::vector<TaskId> order;
  std::size_t size() const { return order.size(); }
  bool operator==(const RouteLabel&) const = default;
};

struct RoutePermutation {
  std::vector<TaskId> order;
  std::size_t size() const { return order.size(); }
  bool operator==(const RoutePermutation&) const = default;
};

struct Sample {
  long long worker_id = 0;
  double query_time = 0.0;
  double worker_x = 0.0;
  double worker_y = 0.0;
  std::vector<Task> tasks;
  RouteLabel label;

  std::size_t n() const { return tasks.size(); }
  std::size_t m() const { return label.size(); }
  bool operator==(const Sample&) const = default;
};

// 1-based position of task_id in route, or nullopt.
inline std::optional<std::size_t> order_index(std::span<const TaskId> route, TaskId task_id) {
  auto it = std::find(route.begin(), route.end(), task_id);
  if (it == route.end()) return std::nullopt;
  return static_cast<std::size_t>(it - route.begin()) + 1;
}

// Positions of every id in route, indexed by id (0 = absent). Ids outside
// [1, max_id] are ignored.
inline std::vector<std::size_t> position_table(std::span<const TaskId> route, std::size_t max_id) {
  std::vector<std::size_t> pos(max_id + 1, 0);
  for (std::size_t i = 0; i < route.size(); ++i) {
    if (route[i] >= 1 && static_cast<std::size_t>(route[i]) <= max_id)
      pos[static_cast<std::size_t>(route[i])] = i + 1;
  }
  return pos;
}

// The only route constraint in this build: a task is emitted at most once.
struct NoDuplication {
  // mask[j] is true when task j+1 may still be emitted.
  static std::vector<bool> feasible(std::size_t n, std::span<const TaskId> emitted) {
    std::vector<bool> mask(n, true);
    for (TaskId id : emitted) {
      if (id >= 1 && static_cast<std::size_t>(id) <= n) mask[static_cast<std::size_t>(id) - 1] = false;
    }
    return mask;
  }
};

inline bool is_permutation_of_n(std::span<const TaskId> route, std::size_t n) {
  if (route.size() != n) return false;
  std::vector<bool> seen(n + 1, false);
  for (TaskId id : route) {
    if (id < 1 || static_cast<std::size_t>(id) > n || seen[static_cast<std::size_t>(id)]) return false;
    seen[static_cast<std::size_t>(id)] = true;
  }
  return true;
}

enum class Violation {
  kEmptyTasks,
  kTooManyTasks,
  kTaskIdMismatch,
  kEmptyLabel,
  kLabelLongerThanTasks,
  kDuplicateLabelId,
  kLabelIdNotAmongTasks,
  kNegativeDistance,
};

inline std::string to_string(Violation v) {
  switch (v) {
    case Violation::kEmptyTasks: return "no tasks";
    case Violation::kTooManyTasks: return "more than 25 tasks";
    case Violation::kTaskIdMismatch: return "task ids are not 1..n in order";
    case Violation::kEmptyLabel: return "empty label";
    case Violation::kLabelLongerThanTasks: return "label longer than task list";
    case Violation::kDuplicateLabelId: return "duplicate label id";
    case Violation::kLabelIdNotAmongTasks: return "label id not among tasks";
    case Violation::kNegativeDistance: return "negative dist_to_worker";
  }
  return "unknown";
}

// Returns every violated invariant; an empty list means the sample is valid.
inline std::vector<Violation> validate_sample(const Sample& s) {
  std::vector<Violation> out;
  const std::size_t n = s.n();
  if (n == 0) out.push_back(Violation::kEmptyTasks);
  if (n > kMaxTasks) out.push_back(Violation::kTooManyTasks);
  for (std::size_t i = 0; i < n; ++i) {
    if (s.tasks[i].id != static_cast<TaskId>(i + 1)) {
      out.push_back(Violation::kTaskIdMismatch);
      break;
    }
  }
  for (const Task& t : s.tasks) {
    if (t.dist_to_worker < 0.0) {
      out.push_back(Violation::kNegativeDistance);
      break;
    }
  }
  if (s.label.order.empty()) out.push_back(Violation::kEmptyLabel);
  if (s.m() > n) out.push_back(Violation::kLabelLongerThanTasks);

  std::unordered_set<TaskId> seen;
  bool dup = false, missing = false;
  for (TaskId id : s.label.order) {
    if (!seen.insert(id).second) dup = true;
    if (id < 1 || static_cast<std::size_t>(id) > n) missing = true;
  }
  if (dup) out.push_back(Violation::kDuplicateLabelId);
  if (missing) out.push_back(Violation::kLabelIdNotAmongTasks);
  return out;
}

inline bool is_valid(const Sample& s) { return validate_sample(s).empty(); }

}  // namespace drl4route
