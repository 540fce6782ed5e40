#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "drl4route/errors.hpp"
#include "drl4route/numerics/parameter_store.hpp"
#include "drl4route/numerics/tape.hpp"

namespace drl4route::numerics {

// Builds a scalar loss on the given tape from the given parameters.
using LossBuilder = std::function<Var(Tape&, ParameterStore&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

// Five-point central differences on a random subsample of coordinates
// against the tape's analytic gradient. Relative error is
// |a - n| / max(|a|, |n|, 1e-6); below 1e-6 the comparison is effectively
// absolute, since exact zeros (e.g. biases cancelled by batch norm) only
// ever show roundoff numerically.
inline GradCheckResult finite_diff_check(const LossBuilder& build, ParameterStore& params, double epsilon,
                                         double tolerance, std::size_t min_coordinates = 50,
                                         std::uint64_t seed = 1) {
  if (!(epsilon > 0.0)) throw InputError("finite_diff_check: epsilon must be > 0");

  {
    Tape tape;
    Var loss = build(tape, params);
    if (!std::isfinite(loss.scalar())) throw DivergenceError("finite_diff_check: non-finite loss");
    backprop(loss, params);
  }

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (Eigen::Index i = 0; i < params[p].value.size(); ++i) coords.emplace_back(p, i);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(coords.size(), min_coordinates));

  const auto eval = [&] {
    Tape tape(false);
    const double v = build(tape, params).scalar();
    if (!std::isfinite(v)) throw DivergenceError("finite_diff_check: non-finite loss");
    return v;
  };

  GradCheckResult r;
  for (auto [p, i] : coords) {
    double& x = params[p].value.data()[i];
    const double saved = x;
    const auto at = [&](double v) {
      x = v;
      return eval();
    };
    const double numeric = (at(saved - 2 * epsilon) - 8 * at(saved - epsilon) + 8 * at(saved + epsilon) -
                            at(saved + 2 * epsilon)) /
                           (12.0 * epsilon);
    x = saved;
    const double analytic = params[p].grad.data()[i];
    const double rel = std::abs(analytic - numeric) / std::max({1e-6, std::abs(numeric), std::abs(analytic)});
    r.max_rel_error = std::max(r.max_rel_error, rel);
  }
  r.coordinates = coords.size();
  r.passed = r.max_rel_error < tolerance;
  return r;
}

}  // namespace drl4route::numerics
