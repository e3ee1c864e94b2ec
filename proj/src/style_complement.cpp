// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/style_complement.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace l2d {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("l2d: " + msg);
}

}  // namespace

MixWeights draw_mix_weights(std::size_t k, RandomStream& rng, double guard) {
  if (k == 0) fail("draw_mix_weights: need at least one transformation");
  MixWeights mw;
  mw.raw.resize(k);
  double total = 0.0;
  do {
    total = 0.0;
    for (double& w : mw.raw) {
      w = rng.normal();
      total += w;
    }
  } while (std::abs(total) < guard);
  mw.coeff.resize(k);
  for (std::size_t i = 0; i < k; ++i) mw.coeff[i] = mw.raw[i] / total;
  return mw;
}

Tensor style_shift(const Tensor& f, const Tensor& mean_shift,
                   const Tensor& var_shift) {
  if (f.ndim() != 4)
    fail("style_shift: features must be [B,C,H,W], got " + shape_str(f.shape()));
  const Shape want{f.dim(1), f.dim(2), f.dim(3)};
  if (mean_shift.shape() != want || var_shift.shape() != want)
    fail("style_shift: shift geometry " + shape_str(mean_shift.shape()) +
         " does not match features " + shape_str(f.shape()));
  auto [m, v] = instance_mean_var(f);
  const Shape stat_shape{f.dim(0), f.dim(1), 1, 1};
  Tensor mu = reshape(m, stat_shape);
  Tensor sigma = sqrt(reshape(v, stat_shape) + StyleComplementModule::kInstanceEps);
  return var_shift * ((f - mu) / sigma) + mean_shift;
}

StyleComplementModule::StyleComplementModule(std::size_t k_transforms,
                                             std::size_t channels,
                                             std::size_t height,
                                             std::size_t width)
    : channels_(channels), height_(height), width_(width) {
  if (k_transforms == 0) fail("StyleComplementModule: K must be ≥ 1");
  transforms_.resize(k_transforms);
  for (std::size_t i = 0; i < k_transforms; ++i) {
    StyleTransformation& t = transforms_[i];
    t.kernel_size = 2 * i + 1;  // distinct odd sizes 1,3,5,...
    const Shape kshape{channels, channels, t.kernel_size, t.kernel_size};
    t.conv_kernel = Tensor(kshape, 0.0);
    t.deconv_kernel = Tensor(kshape, 0.0);
    t.mean_shift = Tensor(Shape{channels, height, width}, 0.0);
    t.var_shift = Tensor(Shape{channels, height, width}, 1.0);
  }
}

void StyleComplementModule::reinit(RandomStream& rng) {
  for (StyleTransformation& t : transforms_) {
    const double bound =
        1.0 / std::sqrt(static_cast<double>(t.conv_kernel.numel()));
    for (double& v : t.conv_kernel.values()) v = rng.uniform_open(-bound, bound);
    for (double& v : t.deconv_kernel.values()) v = rng.uniform_open(-bound, bound);
  }
}

Tensor StyleComplementModule::apply_transformation(
    const Tensor& x, const StyleTransformation& t) const {
  if (x.ndim() != 4 || x.dim(1) != channels_ || x.dim(2) != height_ ||
      x.dim(3) != width_)
    fail("apply_transformation: expected [B," + std::to_string(channels_) + "," +
         std::to_string(height_) + "," + std::to_string(width_) + "], got " +
         shape_str(x.shape()));
  const int pad = static_cast<int>(t.kernel_size - 1) / 2;
  Tensor f = conv2d(x, t.conv_kernel, 1, pad);
  Tensor styled = style_shift(f, t.mean_shift, t.var_shift);
  return conv_transpose2d(styled, t.deconv_kernel, 1, pad);
}

Tensor StyleComplementModule::combine(const Tensor& x,
                                      const std::vector<double>& coeff) const {
  if (coeff.size() != transforms_.size())
    fail("combine: " + std::to_string(coeff.size()) + " coefficients for " +
         std::to_string(transforms_.size()) + " transformations");
  Tensor acc;
  for (std::size_t k = 0; k < transforms_.size(); ++k) {
    Tensor branch = tanh(apply_transformation(x, transforms_[k])) * coeff[k];
    acc = acc.defined() ? acc + branch : branch;
  }
  return acc;
}

std::pair<Tensor, MixWeights> StyleComplementModule::generate(
    const Tensor& x, RandomStream& mix_rng) const {
  MixWeights mw = draw_mix_weights(transforms_.size(), mix_rng, kMixGuard);
  return {combine(x, mw.coeff), mw};
}

void StyleComplementModule::pin_identity() {
  for (StyleTransformation& t : transforms_) {
    for (double& v : t.mean_shift.values()) v = 0.0;
    for (double& v : t.var_shift.values()) v = 1.0;
  }
}

std::vector<Tensor> StyleComplementModule::trainable_params() {
  std::vector<Tensor> out;
  for (StyleTransformation& t : transforms_) {
    out.push_back(t.mean_shift);
    out.push_back(t.var_shift);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> StyleComplementModule::named_params() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < transforms_.size(); ++k) {
    out.emplace_back("g.mean_shift." + std::to_string(k), transforms_[k].mean_shift);
    out.emplace_back("g.var_shift." + std::to_string(k), transforms_[k].var_shift);
  }
  return out;
}

void StyleComplementModule::set_requires_grad(bool rg) {
  for (Tensor& t : trainable_params()) t.set_requires_grad(rg);
}

}  // namespace l2d
