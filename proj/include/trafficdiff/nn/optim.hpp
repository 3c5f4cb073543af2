#pragma once

#include <cstdint>
#include <vector>

#include "trafficdiff/nn/tensor.hpp"

namespace trafficdiff::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig cfg);

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();
  void zero_grad();
  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

/// target <- decay * target + (1 - decay) * source, parameter by parameter.
template <typename T>
void ema_update(const ParamList<T>& target, const ParamList<T>& source, double decay);

template <typename T>
void copy_values(const ParamList<T>& target, const ParamList<T>& source);

}  // namespace trafficdiff::nn
