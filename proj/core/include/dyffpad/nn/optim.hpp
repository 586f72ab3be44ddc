#pragma once

#include <cstdint>
#include <vector>

#include "dyffpad/nn/layers.hpp"

namespace dyffpad::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Tensors with requires_grad == false are left alone.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedTensor<T>> params, AdamConfig cfg = {});

  void zero_grad();
  void step();

  std::int64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<NamedTensor<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

}  // namespace dyffpad::nn
