// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace l2d {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this tensor
  bool requires_grad = false;
};

// Dense double-precision tensor handle with reverse-mode autodiff.
//
// Tensors are cheap to copy (shared storage). Values are written once by
// the operation that creates the tensor; the only later mutation is
// gradient accumulation during backward and in-place parameter updates by
// the optimizer. Gradients propagate only while a Tape is active, so code
// run outside a TapeScope is plain (and cheaper) forward arithmetic.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t ndim() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t numel() const { return d_->values.size(); }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  bool has_grad() const { return !d_->grad.empty(); }
  // Allocates a zero-filled gradient buffer on first use.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // Scalar tensors only.
  double item() const;

  // Same values, no gradient participation.
  Tensor detach() const;

  bool all_finite() const;

  std::shared_ptr<TensorData> d_;
};

// Ordered record of differentiable operations. Creation order is a
// topological order of the DAG, so replaying the records in reverse visits
// every node exactly once with its output gradient complete.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(std::function<void()> backward_step);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
  // accumulate into every requires_grad tensor reachable from the loss;
  // tensors off the loss path are left untouched. Throws if loss is not a
  // scalar.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  static Tape* current();

 private:
  std::vector<std::function<void()>> nodes_;
};

// RAII guard making a Tape the active recorder for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// ---- elementwise arithmetic (numpy-style broadcasting) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return divide(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return divide(a, Tensor::scalar(b)); }
inline Tensor operator/(double a, const Tensor& b) { return divide(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a) { return mul(a, Tensor::scalar(-1.0)); }

// ---- elementwise functions ----

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- reductions ----

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false);

// ---- shape manipulation ----

Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose(const Tensor& a);  // 2-D
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor take_rows(const Tensor& a, const std::vector<std::size_t>& rows);

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b);  // 2-D x 2-D
// x: [B, Din], weight: [Dout, Din], bias: [Dout] -> [B, Dout]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---- neural-net primitives ----

// Cross-correlation. input: [B, Cin, H, W], kernel: [Cout, Cin, k, k].
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
// Gradient-of-convolution semantics. input: [B, Cin, H, W],
// kernel: [Cin, Cout, k, k]; output spatial dims are
// (H - 1) * stride - 2 * padding + k.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        int padding);
// 2x2 max pooling with stride 2; spatial dims must be even.
Tensor max_pool2x2(const Tensor& input);
// Per-sample, per-channel mean and population variance over the spatial
// axes of a [B, C, H, W] tensor. Both outputs have shape [B, C].
std::pair<Tensor, Tensor> instance_mean_var(const Tensor& input);
// Rows of a 2-D tensor scaled to unit L2 norm.
Tensor l2_normalize_rows(const Tensor& a);
// Row-wise log-softmax of a 2-D tensor.
Tensor log_softmax_rows(const Tensor& a);

// Pairwise diagonal-Gaussian log-densities. mean, log_var: [N, D],
// target: [M, D]; out[i][j] = log N(target_j; mean_i, exp(log_var_i)).
Tensor gaussian_pair_log_density(const Tensor& mean, const Tensor& log_var,
                                 const Tensor& target);

}  // namespace l2d
