#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "e3/parameters.hpp"

namespace e3 {

class non_finite_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct adam_config {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Fraction of `total_steps` over which the rate ramps linearly from 0.
  double warmup_fraction = 0.1;
  std::uint64_t total_steps = 0;
};

/// Adam with bias correction and linear warmup.
template <class T>
class adam {
 public:
  explicit adam(adam_config config = {}) : config_(config) {}

  const adam_config& config() const { return config_; }
  std::uint64_t step_count() const { return step_; }

  /// Learning rate applied on the 1-based update number `step`.
  double effective_lr(std::uint64_t step) const {
    const double warmup = config_.warmup_fraction * static_cast<double>(config_.total_steps);
    if (warmup <= 0.0) return config_.learning_rate;
    return config_.learning_rate * std::min(1.0, static_cast<double>(step) / warmup);
  }

  /// Applies one update using the grads currently stored in `params`.
  /// Throws non_finite_error (naming the parameter) before touching any value
  /// if a gradient is NaN or infinite.
  void step(parameter_set<T>& params) {
    for (const auto& [name, t] : params) {
      for (T g : t.grad()) {
        if (!std::isfinite(g)) throw non_finite_error("non-finite gradient in parameter " + name);
      }
    }
    if (first_.empty()) {
      for (const auto& [_, t] : params) {
        first_.emplace_back(t.size(), 0.0);
        second_.emplace_back(t.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw std::logic_error("adam: parameter set changed between steps");

    ++step_;
    const double lr = effective_lr(step_);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    std::size_t k = 0;
    for (auto& [_, t] : params) {
      auto value = t.mutable_data();
      auto grad = t.grad();
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        value[i] = static_cast<T>(value[i] - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
      ++k;
    }
  }

 private:
  adam_config config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace e3
