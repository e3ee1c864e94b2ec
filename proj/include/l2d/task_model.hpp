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

// LeNet-style feature extractor F plus linear classifier head H.
//   conv 6@5x5 -> tanh -> pool -> conv 16@5x5 -> tanh -> pool
//   -> flatten 400 -> linear 120 -> tanh -> linear 84  (= z)
//   head: linear 84 -> C logits
class TaskModel {
 public:
  TaskModel(std::size_t num_classes, RandomStream& rng);

  // x: [B,3,32,32] in [-1,1] -> z: [B,84]
  Tensor embed(const Tensor& x) const;
  // z: [B,84] -> logits [B,C]
  Tensor classify(const Tensor& z) const;

  std::size_t num_classes() const { return num_classes_; }
  std::vector<Tensor> params();
  std::vector<std::pair<std::string, Tensor>> named_params();
  void set_requires_grad(bool rg);
  std::size_t param_count() const;

  // direct access for targeted tests
  Tensor& conv1_kernel() { return conv1_k_; }
  Tensor& head_weight() { return head_w_; }
  Tensor& head_bias() { return head_b_; }

 private:
  std::size_t num_classes_;
  Tensor conv1_k_, conv1_b_;  // [6,3,5,5], [6]
  Tensor conv2_k_, conv2_b_;  // [16,6,5,5], [16]
  Tensor fc1_w_, fc1_b_;      // [120,400], [120]
  Tensor fc2_w_, fc2_b_;      // [84,120], [84]
  Tensor head_w_, head_b_;    // [C,84], [C]
};

// Fraction of samples whose argmax logit matches the label; evaluated in
// mini-batches with no tape active. Ties resolve to the lowest class index.
double accuracy(const TaskModel& model, const Tensor& images,
                const std::vector<int>& labels, std::size_t batch_size = 256);

}  // namespace l2d
