#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drl4route/core.hpp"
#include "drl4route/errors.hpp"
#include "drl4route/kv.hpp"

namespace drl4route::synthgen {

// Courier behavior: the next task maximizes
//   u = -beta_dist * distance - beta_time * slack_after_travel
// under softmax noise with temperature noise_temp.
struct WorkerProfile {
  double beta_dist = 1.0;  // per distance unit
  double beta_time = 0.0;  // per minute of slack
  double noise_temp = 0.5;
  double speed = 0.4;  // distance units per minute
  std::uint64_t seed = 0;

  void validate() const {
    if (beta_dist < 0 || beta_time < 0 || (beta_dist == 0 && beta_time == 0))
      throw InputError("worker profile needs non-negative betas, not both zero");
    if (!(noise_temp > 0)) throw InputError("noise_temp must be > 0");
    if (!(speed > 0)) throw InputError("speed must be > 0");
  }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GenConfig {
  std::size_t workers = 10;
  std::size_t samples_per_worker = 20;
  std::size_t n_min = 5;
  std::size_t n_max = 10;
  double rho = 0.7;  // label length m = max(1, ceil(rho * n))
  double box = 10.0;
  Range promise{-15.0, 120.0};
  Range accept_elapsed{0.0, 60.0};
  Range weight{0.2, 5.0};
  // Per-worker profiles are drawn from these ranges ("mixed profiles").
  Range beta_dist{0.5, 1.5};
  Range beta_time{0.0, 0.05};
  Range noise_temp{0.2, 0.6};
  Range speed{0.3, 0.6};
  std::uint64_t seed = 1;

  void validate() const {
    if (workers == 0 || samples_per_worker == 0) throw InputError("workers and samples_per_worker must be positive");
    if (n_min < 1 || n_min > n_max || n_max > kMaxTasks) throw InputError("need 1 <= n_min <= n_max <= 25");
    if (!(rho > 0.0 && rho <= 1.0)) throw InputError("rho must lie in (0, 1]");
    if (!(box > 0.0)) throw InputError("box must be positive");
    for (const Range* r : {&promise, &accept_elapsed, &weight, &beta_dist, &beta_time, &noise_temp, &speed})
      if (r->lo > r->hi) throw InputError("range lower bound exceeds upper bound");
    if (beta_dist.lo < 0 || beta_time.lo < 0 || (beta_dist.hi == 0 && beta_time.hi == 0))
      throw InputError("beta ranges must be non-negative and not both zero");
    if (!(noise_temp.lo > 0) || !(speed.lo > 0)) throw InputError("noise_temp and speed must be positive");
  }

  static GenConfig from_kv(const kv::Map& m) { return from_kv(m, GenConfig()); }

  static GenConfig from_kv(const kv::Map& m, GenConfig c) {
    const auto range = [&](const std::string& key, const std::string& v) {
      const auto comma = v.find(',');
      if (comma == std::string::npos) throw InputError("config key '" + key + "': expected lo,hi");
      return Range{kv::to_double(key, v.substr(0, comma)), kv::to_double(key, v.substr(comma + 1))};
    };
    for (const auto& [key, value] : m) {
      if (key == "workers") c.workers = kv::to_size(key, value);
      else if (key == "samples_per_worker") c.samples_per_worker = kv::to_size(key, value);
      else if (key == "n_min") c.n_min = kv::to_size(key, value);
      else if (key == "n_max") c.n_max = kv::to_size(key, value);
      else if (key == "rho") c.rho = kv::to_double(key, value);
      else if (key == "box") c.box = kv::to_double(key, value);
      else if (key == "seed") c.seed = kv::to_size(key, value);
      else if (key == "promise") c.promise = range(key, value);
      else if (key == "accept_elapsed") c.accept_elapsed = range(key, value);
      else if (key == "weight") c.weight = range(key, value);
      else if (key == "beta_dist") c.beta_dist = range(key, value);
      else if (key == "beta_time") c.beta_time = range(key, value);
      else if (key == "noise_temp") c.noise_temp = range(key, value);
      else if (key == "speed") c.speed = range(key, value);
      else throw InputError("unknown generation key '" + key + "'");
    }
    return c;
  }
};

inline std::size_t label_length(std::size_t n, double rho) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-12)));
}

namespace detail {

inline double uniform(std::mt19937_64& rng, Range r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0xD1B54A32D192ED03ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline int zone_of(double x, double y, double box) {
  const auto cell = [box](double v) { return std::clamp(static_cast<int>(v / box * 3.0), 0, 2); };
  return cell(x) * 3 + cell(y);
}

}  // namespace detail

inline WorkerProfile draw_profile(const GenConfig& cfg, std::size_t worker) {
  std::mt19937_64 rng(detail::mix(cfg.seed, worker));
  WorkerProfile p;
  p.beta_dist = detail::uniform(rng, cfg.beta_dist);
  p.beta_time = detail::uniform(rng, cfg.beta_time);
  if (p.beta_dist == 0 && p.beta_time == 0) p.beta_dist = cfg.beta_dist.hi > 0 ? cfg.beta_dist.hi : 0.0;
  if (p.beta_dist == 0 && p.beta_time == 0) p.beta_time = cfg.beta_time.hi;
  p.noise_temp = detail::uniform(rng, cfg.noise_temp);
  p.speed = detail::uniform(rng, cfg.speed);
  p.seed = detail::mix(cfg.seed, worker + 0x5151);
  return p;
}

// Full visit order of the simulated courier over all tasks.
inline std::vector<TaskId> simulate_visit_order(const Sample& s, const WorkerProfile& w, std::mt19937_64& rng) {
  std::vector<TaskId> order;
  std::vector<bool> done(s.n(), false);
  double px = s.worker_x, py = s.worker_y, clock = 0.0;
  std::vector<double> u(s.n());
  for (std::size_t step = 0; step < s.n(); ++step) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.n(); ++j) {
      if (done[j]) continue;
      const double dist = std::hypot(s.tasks[j].x - px, s.tasks[j].y - py);
      const double slack = s.tasks[j].promise_remaining - (clock + dist / w.speed);
      u[j] = (-w.beta_dist * dist - w.beta_time * slack) / w.noise_temp;
      best = std::max(best, u[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < s.n(); ++j)
      if (!done[j]) z += std::exp(u[j] - best);
    const double r = std::uniform_real_distribution<double>(0.0, z)(rng);
    double acc = 0.0;
    std::size_t pick = s.n();
    for (std::size_t j = 0; j < s.n(); ++j) {
      if (done[j]) continue;
      pick = j;
      acc += std::exp(u[j] - best);
      if (r < acc) break;
    }
    done[pick] = true;
    order.push_back(static_cast<TaskId>(pick + 1));
    const double dist = std::hypot(s.tasks[pick].x - px, s.tasks[pick].y - py);
    clock += dist / w.speed;
    px = s.tasks[pick].x;
    py = s.tasks[pick].y;
  }
  return order;
}

// Draws one task set and labels it by simulating the given worker.
inline Sample generate_sample(const GenConfig& cfg, const WorkerProfile& w, std::size_t worker,
                              std::size_t sample_index, std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  Sample s;
  s.worker_id = static_cast<long long>(worker);
  s.query_time = static_cast<double>(worker) * 1440.0 + static_cast<double>(sample_index) * 30.0;
  s.worker_x = detail::uniform(rng, {0.0, cfg.box});
  s.worker_y = detail::uniform(rng, {0.0, cfg.box});
  const auto n = static_cast<std::size_t>(
      std::uniform_int_distribution<std::size_t>(cfg.n_min, cfg.n_max)(rng));
  for (std::size_t i = 0; i < n; ++i) {
    Task t;
    t.id = static_cast<TaskId>(i + 1);
    t.x = detail::uniform(rng, {0.0, cfg.box});
    t.y = detail::uniform(rng, {0.0, cfg.box});
    t.dist_to_worker = std::hypot(t.x - s.worker_x, t.y - s.worker_y);
    t.accept_elapsed = detail::uniform(rng, cfg.accept_elapsed);
    t.promise_remaining = detail::uniform(rng, cfg.promise);
    t.aoi_id = detail::zone_of(t.x, t.y, cfg.box);
    t.weight = detail::uniform(rng, cfg.weight);
    t.type_code = static_cast<int>(std::uniform_int_distribution<int>(0, 2)(rng));
    s.tasks.push_back(t);
  }
  auto order = simulate_visit_order(s, w, rng);
  order.resize(label_length(n, cfg.rho));
  s.label.order = std::move(order);
  return s;
}

inline std::vector<Sample> generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  std::vector<Sample> out;
  out.reserve(cfg.workers * cfg.samples_per_worker);
  for (std::size_t w = 0; w < cfg.workers; ++w) {
    const WorkerProfile profile = draw_profile(cfg, w);
    for (std::size_t k = 0; k < cfg.samples_per_worker; ++k) {
      const std::size_t index = w * cfg.samples_per_worker + k;
      out.push_back(generate_sample(cfg, profile, w, k, cfg.seed ^ static_cast<std::uint64_t>(index)));
    }
  }
  return out;
}

// Most urgent first: ascending promise_remaining, ties by lower id.
inline RoutePermutation baseline_time_greedy(const Sample& s) {
  std::vector<TaskId> order(s.n());
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](TaskId a, TaskId b) {
    return s.tasks[static_cast<std::size_t>(a) - 1].promise_remaining <
           s.tasks[static_cast<std::size_t>(b) - 1].promise_remaining;
  });
  return {order};
}

// Nearest-neighbor tour from the worker's location, ties by lower id.
inline RoutePermutation baseline_distance_greedy(const Sample& s) {
  std::vector<TaskId> order;
  std::vector<bool> done(s.n(), false);
  double px = s.worker_x, py = s.worker_y;
  for (std::size_t step = 0; step < s.n(); ++step) {
    std::size_t best = s.n();
    double best_d = 0.0;
    for (std::size_t j = 0; j < s.n(); ++j) {
      if (done[j]) continue;
      const double d = std::hypot(s.tasks[j].x - px, s.tasks[j].y - py);
      if (best == s.n() || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    done[best] = true;
    order.push_back(static_cast<TaskId>(best + 1));
    px = s.tasks[best].x;
    py = s.tasks[best].y;
  }
  return {order};
}

// ---------------------------------------------------------------------------
// Dataset files: one JSON object per line.

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string sample_to_line(const Sample& s) {
  std::string out = "{\"worker_id\":" + std::to_string(s.worker_id) + ",\"query_time\":" + detail::num(s.query_time) +
                    ",\"worker_x\":" + detail::num(s.worker_x) + ",\"worker_y\":" + detail::num(s.worker_y) +
                    ",\"tasks\":[";
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    const Task& t = s.tasks[i];
    if (i) out += ',';
    out += "{\"x\":" + detail::num(t.x) + ",\"y\":" + detail::num(t.y) +
           ",\"dist_to_worker\":" + detail::num(t.dist_to_worker) +
           ",\"accept_elapsed\":" + detail::num(t.accept_elapsed) +
           ",\"promise_remaining\":" + detail::num(t.promise_remaining) + ",\"aoi_id\":" + std::to_string(t.aoi_id) +
           ",\"weight\":" + detail::num(t.weight) + ",\"type_code\":" + std::to_string(t.type_code) + "}";
  }
  out += "],\"label\":[";
  for (std::size_t i = 0; i < s.label.order.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s.label.order[i]);
  }
  out += "]}";
  return out;
}

inline Sample sample_from_line(const std::string& line, long long lineno) {
  Sample s;
  try {
    const auto j = nlohmann::json::parse(line);
    s.worker_id = j.at("worker_id").get<long long>();
    s.query_time = j.at("query_time").get<double>();
    s.worker_x = j.at("worker_x").get<double>();
    s.worker_y = j.at("worker_y").get<double>();
    TaskId id = 1;
    for (const auto& jt : j.at("tasks")) {
      Task t;
      t.id = id++;
      t.x = jt.at("x").get<double>();
      t.y = jt.at("y").get<double>();
      t.dist_to_worker = jt.at("dist_to_worker").get<double>();
      t.accept_elapsed = jt.at("accept_elapsed").get<double>();
      t.promise_remaining = jt.at("promise_remaining").get<double>();
      t.aoi_id = jt.at("aoi_id").get<int>();
      t.weight = jt.at("weight").get<double>();
      t.type_code = jt.at("type_code").get<int>();
      s.tasks.push_back(t);
    }
    for (const auto& jl : j.at("label")) s.label.order.push_back(jl.get<TaskId>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("line " + std::to_string(lineno) + ": " + e.what(), lineno);
  }
  const auto violations = validate_sample(s);
  if (!violations.empty())
    throw FormatError("line " + std::to_string(lineno) + ": " + to_string(violations.front()), lineno);
  return s;
}

inline void write_dataset(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const auto& s : samples) f << sample_to_line(s) << '\n';
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<Sample> read_dataset(std::istream& in) {
  std::vector<Sample> out;
  std::string line;
  long long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(sample_from_line(line, lineno));
  }
  return out;
}

inline std::vector<Sample> read_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return read_dataset(f);
}

}  // namespace drl4route::synthgen
