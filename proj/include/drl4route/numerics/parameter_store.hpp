#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "drl4route/errors.hpp"

namespace drl4route::numerics {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rank-1 parameters are stored as 1 x k matrices; the logical shape is kept
// separately so checkpoints record the true rank.
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  Matrix value;
  Matrix grad;
};

class ParameterStore {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape, Matrix value) {
    if (index_.count(name)) throw InputError("duplicate parameter '" + name + "'");
    if (shape.empty() || shape.size() > 2) throw InputError("parameter rank must be 1 or 2");
    const auto rows = shape.size() == 1 ? 1 : shape[0];
    const auto cols = shape.back();
    if (static_cast<std::size_t>(value.rows()) != rows || static_cast<std::size_t>(value.cols()) != cols)
      throw InputError("value shape does not match declared shape for '" + name + "'");
    index_.emplace(name, params_.size());
    Parameter& p = params_.emplace_back();
    p.name = name;
    p.shape = std::move(shape);
    p.grad = Matrix::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    return p;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter& at(const std::string& name) { return params_[index_of(name)]; }
  const Parameter& at(const std::string& name) const { return params_[index_of(name)]; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("unknown parameter '" + name + "'");
    return it->second;
  }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t num_values() const {
    std::size_t k = 0;
    for (const auto& p : params_) k += static_cast<std::size_t>(p.value.size());
    return k;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  bool operator==(const ParameterStore& o) const {
    if (params_.size() != o.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != o.params_[i].name || params_[i].shape != o.params_[i].shape ||
          params_[i].value != o.params_[i].value)
        return false;
    }
    return true;
  }

 private:
  std::deque<Parameter> params_;  // stable addresses
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace drl4route::numerics
