#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "drl4route/core.hpp"

namespace fixtures {

// A valid sample with n tasks of random features and a random label of length m.
inline drl4route::Sample random_sample(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  drl4route::Sample s;
  s.worker_id = static_cast<long long>(rng() % 100);
  s.query_time = u(rng) * 100;
  s.worker_x = u(rng);
  s.worker_y = u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    drl4route::Task t;
    t.id = static_cast<drl4route::TaskId>(i + 1);
    t.x = u(rng);
    t.y = u(rng);
    t.dist_to_worker = std::hypot(t.x - s.worker_x, t.y - s.worker_y);
    t.accept_elapsed = u(rng) * 6;
    t.promise_remaining = u(rng) * 12 - 20;
    t.aoi_id = static_cast<int>(rng() % 9);
    t.weight = u(rng) / 2;
    t.type_code = static_cast<int>(rng() % 3);
    s.tasks.push_back(t);
  }
  std::vector<drl4route::TaskId> ids(n);
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(m);
  s.label.order = ids;
  return s;
}

inline std::vector<std::vector<drl4route::TaskId>> all_permutations(std::size_t n) {
  std::vector<drl4route::TaskId> p(n);
  std::iota(p.begin(), p.end(), 1);
  std::vector<std::vector<drl4route::TaskId>> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace fixtures
