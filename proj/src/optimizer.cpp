#include "boolattn/optimizer.hpp"

#include <cmath>

namespace boolattn {

AdamW::AdamW(std::vector<Tensor> params, float lr, float weight_decay, float beta1, float beta2,
             float eps)
    : params_(std::move(params)),
      lr_(lr),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].size(), 0.0f);
    v_[i].assign(params_[i].size(), 0.0f);
  }
}

void AdamW::step() {
  ++t_;
  float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.grad().empty()) continue;  // no gradient reached this parameter
    auto& data = p.data();
    auto& grad = p.grad();
    for (std::int64_t j = 0; j < p.size(); ++j) {
      float g = grad[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0f - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0f - beta2_) * g * g;
      float mhat = m_[i][j] / bc1;
      float vhat = v_[i][j] / bc2;
      if (weight_decay_ > 0.0f) data[j] -= lr_ * weight_decay_ * data[j];
      data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_)
    if (!p.grad().empty()) std::fill(p.grad().begin(), p.grad().end(), 0.0f);
}

void Sgd::step() {
  for (auto& p : params_) {
    if (p.grad().empty()) continue;
    auto& data = p.data();
    auto& grad = p.grad();
    for (std::int64_t j = 0; j < p.size(); ++j) data[j] -= lr_ * grad[j];
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_)
    if (!p.grad().empty()) std::fill(p.grad().begin(), p.grad().end(), 0.0f);
}

}  // namespace boolattn
