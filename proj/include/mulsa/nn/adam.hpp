#pragma once

#include <vector>

#include "mulsa/nn/tensor.hpp"

namespace mulsa::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config);

  // Applies one update from the accumulated gradients. Returns the global
  // gradient norm before clipping.
  double step();
  long long steps() const { return t_; }
  AdamConfig& config() { return config_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  AdamConfig config_;
  long long t_ = 0;
};

}  // namespace mulsa::nn
