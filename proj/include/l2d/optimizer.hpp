// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "l2d/tensor.hpp"

namespace l2d {

// Rescales every populated gradient buffer so their combined L2 norm does
// not exceed max_norm; max_norm <= 0 disables clipping. Gradients already
// within the bound are left bitwise untouched. Returns the pre-clip norm.
inline double clip_gradients(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& t : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm <= 0.0 || norm <= max_norm) return norm;
  const double scale = max_norm / norm;
  for (Tensor& t : params) {
    if (!t.has_grad()) continue;
    for (double& g : t.grad()) g *= scale;
  }
  return norm;
}

struct SGDConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = false;
};

// SGD with momentum and decoupled-from-nothing L2 weight decay (the decay is
// added to the gradient before the momentum update, the common convention).
// Parameters whose gradient buffer was never populated are skipped.
class SGD {
 public:
  SGD(std::vector<Tensor> params, SGDConfig cfg)
      : params_(std::move(params)), velocity_(params_.size()), cfg_(cfg) {}

  // lr_scale multiplies the configured learning rate (cosine schedules etc.).
  void step(double lr_scale = 1.0) {
    const double lr = cfg_.lr * lr_scale;
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Tensor& t = params_[p];
      if (!t.has_grad()) continue;
      auto& w = t.values();
      const auto& g = t.grad();
      auto& v = velocity_[p];
      if (v.empty()) v.assign(w.size(), 0.0);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double grad = g[i] + cfg_.weight_decay * w[i];
        v[i] = cfg_.momentum * v[i] + grad;
        w[i] -= lr * (cfg_.nesterov ? grad + cfg_.momentum * v[i] : v[i]);
      }
    }
  }

  void zero_grad() {
    for (Tensor& t : params_) t.zero_grad();
  }

  const SGDConfig& config() const { return cfg_; }
  std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  SGDConfig cfg_;
};

}  // namespace l2d
