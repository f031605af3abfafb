#pragma once

#include <cstdint>
#include <vector>

#include "cdv/layers.hpp"

namespace cdv::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double epoch_decay = 0.975;
  double weight_decay = 0.0;
};

/// Adam with bias correction and decoupled weight decay
/// (params -= lr * wd * params before the adaptive step).
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config), lr_(config.learning_rate) {}

  // Applies one update using the gradients currently stored in params.
  void step(const ParamList& params);
  // Multiplies the learning rate by the per-epoch decay.
  void end_epoch() { lr_ *= config_.epoch_decay; }

  double learning_rate() const noexcept { return lr_; }
  std::uint64_t step_count() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  double lr_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor2> first_moment_;
  std::vector<Tensor2> second_moment_;
};

}  // namespace cdv::nn
