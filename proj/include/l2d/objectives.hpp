// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "l2d/rng.hpp"
#include "l2d/tensor.hpp"

namespace l2d {

// Diagonal-Gaussian conditional q(z⁺|z): a two-layer perceptron (hidden
// width 2D, tanh) emitting a mean and a log-variance per dimension. The
// log-variance is clamped to [-10, 10].
class VariationalGaussianHead {
 public:
  VariationalGaussianHead(std::size_t dim, RandomStream& rng);

  // z: [N,D] -> (mean [N,D], log_var [N,D])
  std::pair<Tensor, Tensor> forward(const Tensor& z) const;

  std::size_t dim() const { return dim_; }
  std::vector<Tensor> params();
  std::vector<std::pair<std::string, Tensor>> named_params();
  void set_requires_grad(bool rg);

 private:
  std::size_t dim_;
  Tensor w1_, b1_;          // D -> 2D
  Tensor wm_, bm_;          // 2D -> D (mean)
  Tensor wl_, bl_;          // 2D -> D (log-variance)
};

struct MMDConfig {
  enum class Kernel { rbf, linear };
  Kernel kernel = Kernel::rbf;
  // > 0 pins the rbf bandwidth instead of the per-batch median heuristic.
  double fixed_bandwidth = 0.0;
};

struct ContrastiveConfig {
  double temperature = 0.1;
};

// Sampled CLUB upper bound: (1/N) Σ_i [log q(z⁺_i|z_i) − (1/N) Σ_j log q(z⁺_j|z_i)].
// Differentiable w.r.t. z⁺ (and z); N ≥ 2 required.
Tensor club_estimate(const Tensor& z, const Tensor& z_plus,
                     const VariationalGaussianHead& q);

// CLUB evaluated from explicit per-row Gaussian parameters; club_estimate is
// this applied to the head's outputs. Useful when the conditional is known
// in closed form.
Tensor club_from_params(const Tensor& mean, const Tensor& log_var,
                        const Tensor& z_plus);

// −(1/N) Σ_i log q(z⁺_i|z_i); the fitting loss for the head's parameters.
Tensor likelihood_loss(const Tensor& z, const Tensor& z_plus,
                       const VariationalGaussianHead& q);

// The same negative log-likelihood from explicit Gaussian parameters.
Tensor likelihood_from_params(const Tensor& mean, const Tensor& log_var,
                              const Tensor& z_plus);

// Supervised contrastive loss, summed over anchors; the denominator runs
// over all other batch elements, anchors without positives contribute 0.
// embeddings must be L2-normalized rows. If every anchor lacks positives the
// result is 0 and *degenerate is set.
Tensor supcon_loss(const Tensor& embeddings, const std::vector<int>& labels,
                   const ContrastiveConfig& cfg, bool* degenerate = nullptr);

// Class-conditional MMD between source and generated latents, averaged over
// classes present on both sides. rbf bandwidth: median heuristic over the
// pooled contributing rows (treated as a constant). If no class contributes
// the result is 0 and *degenerate is set.
Tensor class_conditional_mmd(const Tensor& z, const std::vector<int>& labels_z,
                             const Tensor& z_plus,
                             const std::vector<int>& labels_plus,
                             const MMDConfig& cfg, bool* degenerate = nullptr);

// −(1/N) Σ_i log softmax(logits)_i[y_i]
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Eq.-style combined task loss: −(1/2N)[Σ log ŷ_i[y_i] + Σ log ŷ⁺_i[y_i]].
Tensor cross_entropy_task(const Tensor& logits, const Tensor& logits_plus,
                          const std::vector<int>& labels);

// Diagnostic InfoNCE lower bound with a scaled dot-product critic
// f(a,b) = a·b/√D. Never exceeds log N.
Tensor infonce_estimate(const Tensor& z, const Tensor& z_plus);

}  // namespace l2d
