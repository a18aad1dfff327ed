#pragma once

#include <cmath>
#include <vector>

#include "stum/numerics/tape.hpp"

namespace stum::num {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam with bias correction. Moment buffers are owned here, indexed in
// registration order; the step counter increases by exactly 1 per update.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  void step() {
    ++step_count_;
    const float b1t = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_count_));
    const float b2t = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_count_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = *params_[pi];
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (size_t i = 0; i < p.value.numel(); ++i) {
        const float g = p.grad.data[i];
        m.data[i] = cfg_.beta1 * m.data[i] + (1.0f - cfg_.beta1) * g;
        v.data[i] = cfg_.beta2 * v.data[i] + (1.0f - cfg_.beta2) * g * g;
        const float mhat = m.data[i] / b1t;
        const float vhat = v.data[i] / b2t;
        p.value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t n) { step_count_ = n; }
  const AdamConfig& config() const { return cfg_; }

  size_t size() const { return params_.size(); }
  Tensor& moment1(size_t i) { return m_[i]; }
  Tensor& moment2(size_t i) { return v_[i]; }
  Parameter& param(size_t i) { return *params_[i]; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int64_t step_count_ = 0;
};

}  // namespace stum::num
