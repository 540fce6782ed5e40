#pragma once

#include <stdexcept>
#include <string>

namespace drl4route {

// Malformed or inconsistent caller input (shape mismatch, label id not in
// prediction, bad config value).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every candidate in a decoding step is masked.
class NoFeasibleAction : public std::runtime_error {
 public:
  NoFeasibleAction() : std::runtime_error("no feasible action") {}
};

// A loss or gradient became NaN/inf during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File parse failures carry a location (line number or byte offset).
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, long long location)
      : std::runtime_error(what), location_(location) {}
  long long location() const { return location_; }

 private:
  long long location_;
};

}  // namespace drl4route
