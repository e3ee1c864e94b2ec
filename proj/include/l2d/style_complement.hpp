// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "l2d/rng.hpp"
#include "l2d/tensor.hpp"

namespace l2d {

// One of the K parallel branches: a random-projection conv, a learnable
// per-element restyling of the instance-normalized features, and a random
// transposed conv back to image geometry. Only mean_shift/var_shift are
// trainable; both kernels are resampled by reinit every generator step.
struct StyleTransformation {
  std::size_t kernel_size = 1;  // odd
  Tensor conv_kernel;           // [C,C,k,k]
  Tensor deconv_kernel;         // [C,C,k,k]
  Tensor mean_shift;            // [C,H,W]  (μ_k)
  Tensor var_shift;             // [C,H,W]  (σ_k)
};

struct MixWeights {
  std::vector<double> raw;    // w_k ~ N(0,1), redrawn while |Σw| < guard
  std::vector<double> coeff;  // w_k / Σw; sums to 1
};

// Draw a weight vector under the degeneracy guard |Σw| ≥ guard.
MixWeights draw_mix_weights(std::size_t k, RandomStream& rng, double guard);

// σ_k ⊙ (f − μ)/√(var + ε) + μ_k with μ, var the instance statistics of f.
// mean_shift/var_shift are [C,H,W] and broadcast over the batch.
Tensor style_shift(const Tensor& f, const Tensor& mean_shift,
                   const Tensor& var_shift);

class StyleComplementModule {
 public:
  // K transformations with pairwise-distinct odd kernel sizes 1,3,5,...
  StyleComplementModule(std::size_t k_transforms, std::size_t channels,
                        std::size_t height, std::size_t width);

  // Resample every conv/deconv kernel from the uniform open interval
  // (−1/√n, 1/√n), n being the kernel's element count; μ_k, σ_k untouched.
  void reinit(RandomStream& rng);

  // conv → style_shift → deconv; preserves the input geometry.
  Tensor apply_transformation(const Tensor& x, const StyleTransformation& t) const;

  // Weighted combination Σ coeff_k · tanh(T_k(x)).
  Tensor combine(const Tensor& x, const std::vector<double>& coeff) const;

  // Full Eq.-(2) generation: draw guarded mix weights, combine.
  std::pair<Tensor, MixWeights> generate(const Tensor& x,
                                         RandomStream& mix_rng) const;

  // no_mod ablation: reset μ_k to 0 and σ_k to 1.
  void pin_identity();

  std::vector<Tensor> trainable_params();  // μ_k and σ_k only
  std::vector<std::pair<std::string, Tensor>> named_params();
  void set_requires_grad(bool rg);

  std::vector<StyleTransformation>& transformations() { return transforms_; }
  const std::vector<StyleTransformation>& transformations() const {
    return transforms_;
  }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  static constexpr double kMixGuard = 0.1;
  static constexpr double kInstanceEps = 1e-5;

 private:
  std::size_t channels_, height_, width_;
  std::vector<StyleTransformation> transforms_;
};

}  // namespace l2d
