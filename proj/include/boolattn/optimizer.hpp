#pragma once

#include <vector>

#include "boolattn/tensor.hpp"

namespace boolattn {

/// Adam with decoupled weight decay. Weight decay is skipped when 0.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, float lr, float weight_decay = 0.0f, float beta1 = 0.9f,
        float beta2 = 0.999f, float eps = 1e-8f);

  void step();
  void zero_grad();
  void set_lr(float lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  float lr_, weight_decay_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

/// Plain stochastic gradient descent. Step magnitude follows the raw
/// gradient scale, unlike Adam's normalized updates.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, float lr) : params_(std::move(params)), lr_(lr) {}

  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  float lr_;
};

}  // namespace boolattn
