// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/task_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "l2d/tensor.hpp"

namespace l2d {

namespace {

Tensor init_uniform(const Shape& shape, std::size_t fan_in, RandomStream& rng) {
  Tensor t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

std::size_t checked_classes(std::size_t num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("TaskModel: need at least 2 classes");
  }
  return num_classes;
}

}  // namespace

TaskModel::TaskModel(std::size_t num_classes, RandomStream& rng)
    : num_classes_(checked_classes(num_classes)),
      conv1_k_(init_uniform({6, 3, 5, 5}, 3 * 5 * 5, rng)),
      conv1_b_(init_uniform({6}, 3 * 5 * 5, rng)),
      conv2_k_(init_uniform({16, 6, 5, 5}, 6 * 5 * 5, rng)),
      conv2_b_(init_uniform({16}, 6 * 5 * 5, rng)),
      fc1_w_(init_uniform({120, 400}, 400, rng)),
      fc1_b_(init_uniform({120}, 400, rng)),
      fc2_w_(init_uniform({84, 120}, 120, rng)),
      fc2_b_(init_uniform({84}, 120, rng)),
      head_w_(init_uniform({num_classes, 84}, 84, rng)),
      head_b_(init_uniform({num_classes}, 84, rng)) {}

Tensor TaskModel::embed(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != 32 || s[3] != 32) {
    throw std::invalid_argument("TaskModel::embed: expected [B,3,32,32], got " +
                                shape_str(s));
  }
  const std::size_t b = s[0];
  Tensor h = conv2d(x, conv1_k_, /*stride=*/1, /*padding=*/0);  // [B,6,28,28]
  h = h + reshape(conv1_b_, {6, 1, 1});
  h = max_pool2x2(tanh(h));                                     // [B,6,14,14]
  h = conv2d(h, conv2_k_, /*stride=*/1, /*padding=*/0);         // [B,16,10,10]
  h = h + reshape(conv2_b_, {16, 1, 1});
  h = max_pool2x2(tanh(h));                                     // [B,16,5,5]
  h = reshape(h, {b, 400});
  h = tanh(linear(h, fc1_w_, fc1_b_));                          // [B,120]
  return linear(h, fc2_w_, fc2_b_);                             // [B,84]
}

Tensor TaskModel::classify(const Tensor& z) const {
  const Shape& s = z.shape();
  if (s.size() != 2 || s[1] != 84) {
    throw std::invalid_argument("TaskModel::classify: expected [B,84], got " +
                                shape_str(s));
  }
  return linear(z, head_w_, head_b_);
}

std::vector<Tensor> TaskModel::params() {
  return {conv1_k_, conv1_b_, conv2_k_, conv2_b_, fc1_w_,
          fc1_b_,   fc2_w_,   fc2_b_,   head_w_,  head_b_};
}

std::vector<std::pair<std::string, Tensor>> TaskModel::named_params() {
  return {{"f.conv1.k", conv1_k_}, {"f.conv1.b", conv1_b_},
          {"f.conv2.k", conv2_k_}, {"f.conv2.b", conv2_b_},
          {"f.fc1.w", fc1_w_},     {"f.fc1.b", fc1_b_},
          {"f.fc2.w", fc2_w_},     {"f.fc2.b", fc2_b_},
          {"h.w", head_w_},        {"h.b", head_b_}};
}

void TaskModel::set_requires_grad(bool rg) {
  for (Tensor& p : params()) p.set_requires_grad(rg);
}

std::size_t TaskModel::param_count() const {
  std::size_t n = 0;
  for (const Tensor& p : const_cast<TaskModel*>(this)->params()) {
    n += p.numel();
  }
  return n;
}

double accuracy(const TaskModel& model, const Tensor& images,
                const std::vector<int>& labels, std::size_t batch_size) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[0] != labels.size()) {
    throw std::invalid_argument("accuracy: image/label count mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("accuracy: empty dataset");
  const std::size_t n = labels.size();
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    std::vector<std::size_t> rows(count);
    for (std::size_t i = 0; i < count; ++i) rows[i] = start + i;
    // Plain forward pass: no tape in scope, so nothing is recorded.
    Tensor logits = model.classify(model.embed(take_rows(images, rows)));
    const std::size_t c = logits.shape()[1];
    const double* lp = logits.values().data();
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (lp[i * c + j] > lp[i * c + best]) best = j;
      }
      if (static_cast<int>(best) == labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace l2d
