// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace l2d {

namespace {

thread_local Tape* g_current_tape = nullptr;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("l2d: " + msg);
}

void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

std::vector<double>& grad_buf(const std::shared_ptr<TensorData>& t) {
  if (t->grad.empty()) t->grad.assign(t->values.size(), 0.0);
  return t->grad;
}

// Strides of `s` embedded in the coordinate system of the (right-aligned)
// broadcast result shape `out`; broadcast axes get stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t acc = 1;
  const std::size_t off = out.size() - s.size();
  for (std::size_t i = s.size(); i-- > 0;) {
    strides[off + i] = (s[i] == 1) ? 0 : acc;
    acc *= s[i];
  }
  return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ad = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t bd = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ad != bd && ad != 1 && bd != 1)
      fail(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
           " are not broadcastable");
    out[i] = std::max(ad, bd);
  }
  return out;
}

enum class BinKind { Add, Sub, Mul, Div };

template <BinKind K>
inline double bin_val(double a, double b) {
  if constexpr (K == BinKind::Add) return a + b;
  if constexpr (K == BinKind::Sub) return a - b;
  if constexpr (K == BinKind::Mul) return a * b;
  return a / b;
}

// d(out)/d(a) and d(out)/d(b) contributions for one element.
template <BinKind K>
inline void bin_grad(double go, double a, double b, double* da, double* db) {
  (void)a;
  if constexpr (K == BinKind::Add) {
    if (da) *da += go;
    if (db) *db += go;
  } else if constexpr (K == BinKind::Sub) {
    if (da) *da += go;
    if (db) *db -= go;
  } else if constexpr (K == BinKind::Mul) {
    if (da) *da += go * b;
    if (db) *db += go * a;
  } else {
    if (da) *da += go / b;
    if (db) *db -= go * a / (b * b);
  }
}

template <BinKind K>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name) {
  require(a.defined() && b.defined(), std::string(name) + ": undefined operand");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::vector<double>& av = a.values();
  const std::vector<double>& bv = b.values();

  Shape os;
  std::vector<double> ov;
  const bool same = as == bs;
  if (same) {
    os = as;
    ov.resize(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = bin_val<K>(av[i], bv[i]);
  } else if (bv.size() == 1) {
    os = as;
    ov.resize(av.size());
    const double s = bv[0];
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = bin_val<K>(av[i], s);
  } else if (av.size() == 1) {
    os = bs;
    ov.resize(bv.size());
    const double s = av[0];
    for (std::size_t i = 0; i < bv.size(); ++i) ov[i] = bin_val<K>(s, bv[i]);
  } else {
    os = broadcast_shape(as, bs, name);
    const std::size_t n = shape_numel(os);
    ov.resize(n);
    const auto astr = broadcast_strides(as, os);
    const auto bstr = broadcast_strides(bs, os);
    const std::size_t r = os.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ao = 0, bo = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ov[i] = bin_val<K>(av[ao], bv[bo]);
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        ao += astr[d];
        bo += bstr[d];
        if (idx[d] < os[d]) break;
        idx[d] = 0;
        ao -= astr[d] * os[d];
        bo -= bstr[d] * os[d];
      }
    }
  }

  Tensor out(std::move(os), std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && (a.requires_grad() || b.requires_grad());
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto bd = b.d_;
    auto od = out.d_;
    tape->record([ad, bd, od]() {
      if (od->grad.empty()) return;
      const std::vector<double>& go = od->grad;
      double* da = ad->requires_grad ? grad_buf(ad).data() : nullptr;
      double* db = bd->requires_grad ? grad_buf(bd).data() : nullptr;
      if (!da && !db) return;
      const std::vector<double>& av = ad->values;
      const std::vector<double>& bv = bd->values;
      if (ad->shape == bd->shape) {
        for (std::size_t i = 0; i < go.size(); ++i)
          bin_grad<K>(go[i], av[i], bv[i], da ? da + i : nullptr,
                      db ? db + i : nullptr);
      } else if (bv.size() == 1) {
        for (std::size_t i = 0; i < go.size(); ++i)
          bin_grad<K>(go[i], av[i], bv[0], da ? da + i : nullptr, db);
      } else if (av.size() == 1) {
        for (std::size_t i = 0; i < go.size(); ++i)
          bin_grad<K>(go[i], av[0], bv[i], da, db ? db + i : nullptr);
      } else {
        const Shape& os2 = od->shape;
        const auto astr = broadcast_strides(ad->shape, os2);
        const auto bstr = broadcast_strides(bd->shape, os2);
        const std::size_t r = os2.size();
        std::vector<std::size_t> idx(r, 0);
        std::size_t ao = 0, bo = 0;
        for (std::size_t i = 0; i < go.size(); ++i) {
          bin_grad<K>(go[i], av[ao], bv[bo], da ? da + ao : nullptr,
                      db ? db + bo : nullptr);
          for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            ao += astr[d];
            bo += bstr[d];
            if (idx[d] < os2[d]) break;
            idx[d] = 0;
            ao -= astr[d] * os2[d];
            bo -= bstr[d] * os2[d];
          }
        }
      }
    });
  }
  return out;
}

// Unary elementwise op; DerivFn(x, y) returns dy/dx for one element.
template <typename ValFn, typename DerivFn>
Tensor unary_op(const Tensor& a, ValFn val, DerivFn deriv) {
  const std::vector<double>& av = a.values();
  std::vector<double> ov(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = val(av[i]);
  Tensor out(a.shape(), std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    tape->record([ad, od, deriv]() {
      if (od->grad.empty() || !ad->requires_grad) return;
      const std::vector<double>& go = od->grad;
      std::vector<double>& ga = grad_buf(ad);
      const std::vector<double>& av2 = ad->values;
      const std::vector<double>& ov2 = od->values;
      for (std::size_t i = 0; i < go.size(); ++i)
        ga[i] += go[i] * deriv(av2[i], ov2[i]);
    });
  }
  return out;
}

// Splits a shape into [prefix, axis, suffix] extents for axis reductions.
void axis_extents(const Shape& s, std::size_t axis, std::size_t& pre,
                  std::size_t& ax, std::size_t& post) {
  require(axis < s.size(), "reduction axis out of range for shape " + shape_str(s));
  pre = 1;
  for (std::size_t i = 0; i < axis; ++i) pre *= s[i];
  ax = s[axis];
  post = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) post *= s[i];
}

int ceil_div_pos(int num, int den) { return num <= 0 ? 0 : (num + den - 1) / den; }

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  d_ = std::make_shared<TensorData>();
  d_->values.assign(shape_numel(shape), fill);
  d_->shape = std::move(shape);
  d_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  require(shape_numel(shape) == values.size(),
          "tensor shape " + shape_str(shape) + " does not match value count " +
              std::to_string(values.size()));
  d_ = std::make_shared<TensorData>();
  d_->shape = std::move(shape);
  d_->values = std::move(values);
  d_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

std::vector<double>& Tensor::grad() { return grad_buf(d_); }

const std::vector<double>& Tensor::grad() const {
  require(!d_->grad.empty(), "gradient not populated");
  return d_->grad;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

double Tensor::item() const {
  require(numel() == 1, "item() requires a scalar, got shape " + shape_str(shape()));
  return d_->values[0];
}

Tensor Tensor::detach() const {
  Tensor t(d_->shape, d_->values);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : d_->values)
    if (!std::isfinite(v)) return false;
  return true;
}

Tape::~Tape() = default;

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::function<void()> backward_step) {
  nodes_.push_back(std::move(backward_step));
}

void Tape::backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1,
          "backward requires a scalar loss, got shape " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("<none>")));
  grad_buf(loss.d_)[0] += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) nodes_[i]();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) {
  g_current_tape = &tape;
}

TapeScope::~TapeScope() { g_current_tape = previous_; }

Tensor add(const Tensor& a, const Tensor& b) { return binary_op<BinKind::Add>(a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op<BinKind::Sub>(a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op<BinKind::Mul>(a, b, "mul"); }
Tensor divide(const Tensor& a, const Tensor& b) { return binary_op<BinKind::Div>(a, b, "divide"); }

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  return unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  const std::vector<double>& av = a.values();
  double s = 0.0;
  for (double v : av) s += v;
  Tensor out = Tensor::scalar(s);
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    tape->record([ad, od]() {
      if (od->grad.empty()) return;
      const double go = od->grad[0];
      std::vector<double>& ga = grad_buf(ad);
      for (double& g : ga) g += go;
    });
  }
  return out;
}

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) {
  std::size_t pre, ax, post;
  axis_extents(a.shape(), axis, pre, ax, post);
  Shape os;
  for (std::size_t i = 0; i < a.ndim(); ++i) {
    if (i == axis) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(a.dim(i));
    }
  }
  if (os.empty()) os.push_back(1);
  std::vector<double> ov(pre * post, 0.0);
  const std::vector<double>& av = a.values();
  for (std::size_t p = 0; p < pre; ++p)
    for (std::size_t k = 0; k < ax; ++k) {
      const double* src = av.data() + (p * ax + k) * post;
      double* dst = ov.data() + p * post;
      for (std::size_t q = 0; q < post; ++q) dst[q] += src[q];
    }
  Tensor out(std::move(os), std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    tape->record([ad, od, pre, ax, post]() {
      if (od->grad.empty()) return;
      std::vector<double>& ga = grad_buf(ad);
      const std::vector<double>& go = od->grad;
      for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t k = 0; k < ax; ++k) {
          double* dst = ga.data() + (p * ax + k) * post;
          const double* src = go.data() + p * post;
          for (std::size_t q = 0; q < post; ++q) dst[q] += src[q];
        }
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  return sum(a) * inv;
}

Tensor mean(const Tensor& a, std::size_t axis, bool keepdim) {
  const double inv = 1.0 / static_cast<double>(a.dim(axis));
  return sum(a, axis, keepdim) * inv;
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  require(shape_numel(new_shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " +
              shape_str(new_shape));
  Tensor out(std::move(new_shape), a.values());
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    tape->record([ad, od]() {
      if (od->grad.empty()) return;
      std::vector<double>& ga = grad_buf(ad);
      const std::vector<double>& go = od->grad;
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.ndim() == 2, "transpose expects a 2-D tensor, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> ov(r * c);
  const std::vector<double>& av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = av[i * c + j];
  Tensor out(Shape{c, r}, std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    tape->record([ad, od, r, c]() {
      if (od->grad.empty()) return;
      std::vector<double>& ga = grad_buf(ad);
      const std::vector<double>& go = od->grad;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j * r + i];
    });
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require(a.ndim() == b.ndim() && a.ndim() >= 1,
          "concat_rows: rank mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  for (std::size_t i = 1; i < a.ndim(); ++i)
    require(a.dim(i) == b.dim(i), "concat_rows: trailing dims differ, " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Shape os = a.shape();
  os[0] += b.dim(0);
  std::vector<double> ov;
  ov.reserve(a.numel() + b.numel());
  ov.insert(ov.end(), a.values().begin(), a.values().end());
  ov.insert(ov.end(), b.values().begin(), b.values().end());
  Tensor out(std::move(os), std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && (a.requires_grad() || b.requires_grad());
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto bd = b.d_;
    auto od = out.d_;
    tape->record([ad, bd, od]() {
      if (od->grad.empty()) return;
      const std::vector<double>& go = od->grad;
      const std::size_t na = ad->values.size();
      if (ad->requires_grad) {
        std::vector<double>& ga = grad_buf(ad);
        for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
      }
      if (bd->requires_grad) {
        std::vector<double>& gb = grad_buf(bd);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[na + i];
      }
    });
  }
  return out;
}

Tensor take_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
  require(a.ndim() >= 1, "take_rows: scalar input");
  const std::size_t span = a.numel() / a.dim(0);
  for (std::size_t r : rows)
    require(r < a.dim(0), "take_rows: row index " + std::to_string(r) +
                              " out of range for shape " + shape_str(a.shape()));
  Shape os = a.shape();
  os[0] = rows.size();
  std::vector<double> ov(rows.size() * span);
  const std::vector<double>& av = a.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(av.data() + rows[i] * span, span, ov.data() + i * span);
  Tensor out(std::move(os), std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    auto idx = rows;
    tape->record([ad, od, idx, span]() {
      if (od->grad.empty()) return;
      std::vector<double>& ga = grad_buf(ad);
      const std::vector<double>& go = od->grad;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* dst = ga.data() + idx[i] * span;
        const double* src = go.data() + i * span;
        for (std::size_t q = 0; q < span; ++q) dst[q] += src[q];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2,
          "matmul expects 2-D tensors, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  require(a.dim(1) == b.dim(0), "matmul: inner dims differ, " +
                                    shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> ov(m * n, 0.0);
  {
    const double* ap = a.values().data();
    const double* bp = b.values().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const double av = ap[i * k + t];
        const double* brow = bp + t * n;
        double* orow = ov.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
  }
  Tensor out(Shape{m, n}, std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && (a.requires_grad() || b.requires_grad());
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto bd = b.d_;
    auto od = out.d_;
    tape->record([ad, bd, od, m, k, n]() {
      if (od->grad.empty()) return;
      const double* go = od->grad.data();
      if (ad->requires_grad) {
        double* ga = grad_buf(ad).data();
        const double* bp = bd->values.data();
        // dA[i,t] += sum_j go[i,j] * B[t,j]
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            const double* grow = go + i * n;
            const double* brow = bp + t * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[i * k + t] += s;
          }
      }
      if (bd->requires_grad) {
        double* gb = grad_buf(bd).data();
        const double* ap = ad->values.data();
        // dB[t,j] += sum_i A[i,t] * go[i,j]
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            const double av = ap[i * k + t];
            const double* grow = go + i * n;
            double* brow = gb + t * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.ndim() == 2 && weight.ndim() == 2 && bias.ndim() == 1,
          "linear expects x[B,Din], weight[Dout,Din], bias[Dout]; got " +
              shape_str(x.shape()) + ", " + shape_str(weight.shape()) + ", " +
              shape_str(bias.shape()));
  const std::size_t batch = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  require(weight.dim(1) == din && bias.dim(0) == dout,
          "linear: dimension mismatch, x " + shape_str(x.shape()) + " weight " +
              shape_str(weight.shape()) + " bias " + shape_str(bias.shape()));
  std::vector<double> ov(batch * dout);
  {
    const double* xp = x.values().data();
    const double* wp = weight.values().data();
    const double* bp = bias.values().data();
    for (std::size_t i = 0; i < batch; ++i) {
      const double* xrow = xp + i * din;
      double* orow = ov.data() + i * dout;
      for (std::size_t o = 0; o < dout; ++o) {
        const double* wrow = wp + o * din;
        double s = bp[o];
        for (std::size_t d = 0; d < din; ++d) s += xrow[d] * wrow[d];
        orow[o] = s;
      }
    }
  }
  Tensor out(Shape{batch, dout}, std::move(ov));
  Tape* tape = Tape::current();
  const bool rg =
      tape && (x.requires_grad() || weight.requires_grad() || bias.requires_grad());
  out.set_requires_grad(rg);
  if (rg) {
    auto xd = x.d_;
    auto wd = weight.d_;
    auto bd = bias.d_;
    auto od = out.d_;
    tape->record([xd, wd, bd, od, batch, din, dout]() {
      if (od->grad.empty()) return;
      const double* go = od->grad.data();
      if (xd->requires_grad) {
        double* gx = grad_buf(xd).data();
        const double* wp = wd->values.data();
        for (std::size_t i = 0; i < batch; ++i) {
          const double* grow = go + i * dout;
          double* xrow = gx + i * din;
          for (std::size_t o = 0; o < dout; ++o) {
            const double g = grow[o];
            const double* wrow = wp + o * din;
            for (std::size_t d = 0; d < din; ++d) xrow[d] += g * wrow[d];
          }
        }
      }
      if (wd->requires_grad) {
        double* gw = grad_buf(wd).data();
        const double* xp = xd->values.data();
        for (std::size_t i = 0; i < batch; ++i) {
          const double* grow = go + i * dout;
          const double* xrow = xp + i * din;
          for (std::size_t o = 0; o < dout; ++o) {
            const double g = grow[o];
            double* wrow = gw + o * din;
            for (std::size_t d = 0; d < din; ++d) wrow[d] += g * xrow[d];
          }
        }
      }
      if (bd->requires_grad) {
        double* gb = grad_buf(bd).data();
        for (std::size_t i = 0; i < batch; ++i) {
          const double* grow = go + i * dout;
          for (std::size_t o = 0; o < dout; ++o) gb[o] += grow[o];
        }
      }
    });
  }
  return out;
}

namespace {

struct ConvDims {
  std::size_t batch, cin, h, w, cout, k;
  int stride, padding;
  std::size_t ho, wo;
};

// in-plane gather/accumulate core shared by the four conv loops:
// out[oh][ow_lo..ow_hi) (+)= kv * in[ih][...] with matching column offsets.
inline void row_axpy(double* dst, const double* src, double kv, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += kv * src[i];
}

inline double row_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  require(input.ndim() == 4, "conv2d: input must be [B,Cin,H,W], got " +
                                 shape_str(input.shape()));
  require(kernel.ndim() == 4 && kernel.dim(2) == kernel.dim(3),
          "conv2d: kernel must be [Cout,Cin,k,k], got " + shape_str(kernel.shape()));
  require(input.dim(1) == kernel.dim(1),
          "conv2d: input channels " + std::to_string(input.dim(1)) +
              " do not match kernel input channels " + std::to_string(kernel.dim(1)) +
              "; input " + shape_str(input.shape()) + ", kernel " +
              shape_str(kernel.shape()));
  require(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");

  ConvDims dm;
  dm.batch = input.dim(0);
  dm.cin = input.dim(1);
  dm.h = input.dim(2);
  dm.w = input.dim(3);
  dm.cout = kernel.dim(0);
  dm.k = kernel.dim(2);
  dm.stride = stride;
  dm.padding = padding;
  const int ho = (static_cast<int>(dm.h) + 2 * padding - static_cast<int>(dm.k)) / stride + 1;
  const int wo = (static_cast<int>(dm.w) + 2 * padding - static_cast<int>(dm.k)) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: kernel larger than padded input, input " +
                                  shape_str(input.shape()) + ", kernel " +
                                  shape_str(kernel.shape()));
  dm.ho = static_cast<std::size_t>(ho);
  dm.wo = static_cast<std::size_t>(wo);

  std::vector<double> ov(dm.batch * dm.cout * dm.ho * dm.wo, 0.0);
  const double* in = input.values().data();
  const double* ker = kernel.values().data();
  const std::size_t k = dm.k;
  const int s = stride, p = padding;
  const int W = static_cast<int>(dm.w), H = static_cast<int>(dm.h);
  const int Wo = static_cast<int>(dm.wo), Ho = static_cast<int>(dm.ho);

  for (std::size_t b = 0; b < dm.batch; ++b)
    for (std::size_t co = 0; co < dm.cout; ++co) {
      double* oplane = ov.data() + (b * dm.cout + co) * dm.ho * dm.wo;
      for (std::size_t ci = 0; ci < dm.cin; ++ci) {
        const double* iplane = in + (b * dm.cin + ci) * dm.h * dm.w;
        const double* kplane = ker + (co * dm.cin + ci) * k * k;
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t c = 0; c < k; ++c) {
            const double kv = kplane[r * k + c];
            if (kv == 0.0) continue;
            const int ow_lo = ceil_div_pos(p - static_cast<int>(c), s);
            const int ow_hi = std::min(Wo, ceil_div_pos(W - static_cast<int>(c) + p, s));
            if (ow_lo >= ow_hi) continue;
            for (int oh = 0; oh < Ho; ++oh) {
              const int ih = oh * s + static_cast<int>(r) - p;
              if (ih < 0 || ih >= H) continue;
              const int iw0 = ow_lo * s + static_cast<int>(c) - p;
              double* orow = oplane + static_cast<std::size_t>(oh) * dm.wo + ow_lo;
              const double* irow = iplane + static_cast<std::size_t>(ih) * dm.w + iw0;
              if (s == 1) {
                row_axpy(orow, irow, kv, static_cast<std::size_t>(ow_hi - ow_lo));
              } else {
                for (int t = 0; t < ow_hi - ow_lo; ++t)
                  orow[t] += kv * irow[static_cast<std::size_t>(t) * s];
              }
            }
          }
      }
    }

  Tensor out(Shape{dm.batch, dm.cout, dm.ho, dm.wo}, std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && (input.requires_grad() || kernel.requires_grad());
  out.set_requires_grad(rg);
  if (rg) {
    auto id = input.d_;
    auto kd = kernel.d_;
    auto od = out.d_;
    tape->record([id, kd, od, dm]() {
      if (od->grad.empty()) return;
      const double* go = od->grad.data();
      const std::size_t k = dm.k;
      const int s = dm.stride, p = dm.padding;
      const int W = static_cast<int>(dm.w), H = static_cast<int>(dm.h);
      const int Wo = static_cast<int>(dm.wo), Ho = static_cast<int>(dm.ho);
      double* gin = id->requires_grad ? grad_buf(id).data() : nullptr;
      double* gker = kd->requires_grad ? grad_buf(kd).data() : nullptr;
      const double* ker = kd->values.data();
      const double* in = id->values.data();
      for (std::size_t b = 0; b < dm.batch; ++b)
        for (std::size_t co = 0; co < dm.cout; ++co) {
          const double* gplane = go + (b * dm.cout + co) * dm.ho * dm.wo;
          for (std::size_t ci = 0; ci < dm.cin; ++ci) {
            const std::size_t in_off = (b * dm.cin + ci) * dm.h * dm.w;
            const std::size_t k_off = (co * dm.cin + ci) * k * k;
            for (std::size_t r = 0; r < k; ++r)
              for (std::size_t c = 0; c < k; ++c) {
                const int ow_lo = ceil_div_pos(p - static_cast<int>(c), s);
                const int ow_hi =
                    std::min(Wo, ceil_div_pos(W - static_cast<int>(c) + p, s));
                if (ow_lo >= ow_hi) continue;
                const std::size_t n = static_cast<std::size_t>(ow_hi - ow_lo);
                const double kv = ker[k_off + r * k + c];
                double ksum = 0.0;
                for (int oh = 0; oh < Ho; ++oh) {
                  const int ih = oh * s + static_cast<int>(r) - p;
                  if (ih < 0 || ih >= H) continue;
                  const int iw0 = ow_lo * s + static_cast<int>(c) - p;
                  const double* grow =
                      gplane + static_cast<std::size_t>(oh) * dm.wo + ow_lo;
                  const std::size_t irow_off =
                      in_off + static_cast<std::size_t>(ih) * dm.w + iw0;
                  if (s == 1) {
                    if (gin && kv != 0.0) row_axpy(gin + irow_off, grow, kv, n);
                    if (gker) ksum += row_dot(grow, in + irow_off, n);
                  } else {
                    for (std::size_t t = 0; t < n; ++t) {
                      if (gin) gin[irow_off + t * s] += kv * grow[t];
                      if (gker) ksum += grow[t] * in[irow_off + t * s];
                    }
                  }
                }
                if (gker) gker[k_off + r * k + c] += ksum;
              }
          }
        }
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        int padding) {
  require(input.ndim() == 4, "conv_transpose2d: input must be [B,Cin,H,W], got " +
                                 shape_str(input.shape()));
  require(kernel.ndim() == 4 && kernel.dim(2) == kernel.dim(3),
          "conv_transpose2d: kernel must be [Cin,Cout,k,k], got " +
              shape_str(kernel.shape()));
  require(input.dim(1) == kernel.dim(0),
          "conv_transpose2d: input channels " + std::to_string(input.dim(1)) +
              " do not match kernel input channels " + std::to_string(kernel.dim(0)) +
              "; input " + shape_str(input.shape()) + ", kernel " +
              shape_str(kernel.shape()));
  require(stride >= 1 && padding >= 0, "conv_transpose2d: invalid stride/padding");

  ConvDims dm;
  dm.batch = input.dim(0);
  dm.cin = input.dim(1);
  dm.h = input.dim(2);
  dm.w = input.dim(3);
  dm.cout = kernel.dim(1);
  dm.k = kernel.dim(2);
  dm.stride = stride;
  dm.padding = padding;
  const int ho = (static_cast<int>(dm.h) - 1) * stride - 2 * padding + static_cast<int>(dm.k);
  const int wo = (static_cast<int>(dm.w) - 1) * stride - 2 * padding + static_cast<int>(dm.k);
  require(ho >= 1 && wo >= 1, "conv_transpose2d: empty output for input " +
                                  shape_str(input.shape()) + ", kernel " +
                                  shape_str(kernel.shape()));
  dm.ho = static_cast<std::size_t>(ho);
  dm.wo = static_cast<std::size_t>(wo);

  std::vector<double> ov(dm.batch * dm.cout * dm.ho * dm.wo, 0.0);
  const double* in = input.values().data();
  const double* ker = kernel.values().data();
  const std::size_t k = dm.k;
  const int s = stride, p = padding;
  const int W = static_cast<int>(dm.w), H = static_cast<int>(dm.h);
  const int Wo = static_cast<int>(dm.wo), Ho = static_cast<int>(dm.ho);

  for (std::size_t b = 0; b < dm.batch; ++b)
    for (std::size_t ci = 0; ci < dm.cin; ++ci) {
      const double* iplane = in + (b * dm.cin + ci) * dm.h * dm.w;
      for (std::size_t co = 0; co < dm.cout; ++co) {
        double* oplane = ov.data() + (b * dm.cout + co) * dm.ho * dm.wo;
        const double* kplane = ker + (ci * dm.cout + co) * k * k;
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t c = 0; c < k; ++c) {
            const double kv = kplane[r * k + c];
            if (kv == 0.0) continue;
            // iw range with 0 <= iw*s + c - p < Wo
            const int iw_lo = ceil_div_pos(p - static_cast<int>(c), s);
            const int iw_hi = std::min(W, ceil_div_pos(Wo - static_cast<int>(c) + p, s));
            if (iw_lo >= iw_hi) continue;
            for (int ih = 0; ih < H; ++ih) {
              const int oh = ih * s + static_cast<int>(r) - p;
              if (oh < 0 || oh >= Ho) continue;
              const int ow0 = iw_lo * s + static_cast<int>(c) - p;
              const double* irow = iplane + static_cast<std::size_t>(ih) * dm.w + iw_lo;
              double* orow = oplane + static_cast<std::size_t>(oh) * dm.wo + ow0;
              if (s == 1) {
                row_axpy(orow, irow, kv, static_cast<std::size_t>(iw_hi - iw_lo));
              } else {
                for (int t = 0; t < iw_hi - iw_lo; ++t)
                  orow[static_cast<std::size_t>(t) * s] += kv * irow[t];
              }
            }
          }
      }
    }

  Tensor out(Shape{dm.batch, dm.cout, dm.ho, dm.wo}, std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && (input.requires_grad() || kernel.requires_grad());
  out.set_requires_grad(rg);
  if (rg) {
    auto id = input.d_;
    auto kd = kernel.d_;
    auto od = out.d_;
    tape->record([id, kd, od, dm]() {
      if (od->grad.empty()) return;
      const double* go = od->grad.data();
      const std::size_t k = dm.k;
      const int s = dm.stride, p = dm.padding;
      const int W = static_cast<int>(dm.w), H = static_cast<int>(dm.h);
      const int Wo = static_cast<int>(dm.wo), Ho = static_cast<int>(dm.ho);
      double* gin = id->requires_grad ? grad_buf(id).data() : nullptr;
      double* gker = kd->requires_grad ? grad_buf(kd).data() : nullptr;
      const double* ker = kd->values.data();
      const double* in = id->values.data();
      for (std::size_t b = 0; b < dm.batch; ++b)
        for (std::size_t ci = 0; ci < dm.cin; ++ci) {
          const std::size_t in_off = (b * dm.cin + ci) * dm.h * dm.w;
          for (std::size_t co = 0; co < dm.cout; ++co) {
            const double* gplane = go + (b * dm.cout + co) * dm.ho * dm.wo;
            const std::size_t k_off = (ci * dm.cout + co) * k * k;
            for (std::size_t r = 0; r < k; ++r)
              for (std::size_t c = 0; c < k; ++c) {
                const int iw_lo = ceil_div_pos(p - static_cast<int>(c), s);
                const int iw_hi =
                    std::min(W, ceil_div_pos(Wo - static_cast<int>(c) + p, s));
                if (iw_lo >= iw_hi) continue;
                const std::size_t n = static_cast<std::size_t>(iw_hi - iw_lo);
                const double kv = ker[k_off + r * k + c];
                double ksum = 0.0;
                for (int ih = 0; ih < H; ++ih) {
                  const int oh = ih * s + static_cast<int>(r) - p;
                  if (oh < 0 || oh >= Ho) continue;
                  const int ow0 = iw_lo * s + static_cast<int>(c) - p;
                  const std::size_t irow_off =
                      in_off + static_cast<std::size_t>(ih) * dm.w + iw_lo;
                  const double* grow =
                      gplane + static_cast<std::size_t>(oh) * dm.wo + ow0;
                  if (s == 1) {
                    if (gin && kv != 0.0) row_axpy(gin + irow_off, grow, kv, n);
                    if (gker) ksum += row_dot(in + irow_off, grow, n);
                  } else {
                    for (std::size_t t = 0; t < n; ++t) {
                      if (gin) gin[irow_off + t] += kv * grow[t * s];
                      if (gker) ksum += in[irow_off + t] * grow[t * s];
                    }
                  }
                }
                if (gker) gker[k_off + r * k + c] += ksum;
              }
          }
        }
    });
  }
  return out;
}

Tensor max_pool2x2(const Tensor& input) {
  require(input.ndim() == 4, "max_pool2x2: input must be [B,C,H,W], got " +
                                 shape_str(input.shape()));
  require(input.dim(2) % 2 == 0 && input.dim(3) % 2 == 0,
          "max_pool2x2: spatial dims must be even, got " + shape_str(input.shape()));
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<double> ov(planes * ho * wo);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(planes * ho * wo);
  const double* in = input.values().data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* ip = in + pl * h * w;
    double* op = ov.data() + pl * ho * wo;
    std::uint32_t* am = argmax->data() + pl * ho * wo;
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const std::size_t base = (2 * oh) * w + 2 * ow;
        std::size_t best = base;
        double bv = ip[base];
        const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t c : cand)
          if (ip[c] > bv) {
            bv = ip[c];
            best = c;
          }
        op[oh * wo + ow] = bv;
        am[oh * wo + ow] = static_cast<std::uint32_t>(best);
      }
  }
  Tensor out(Shape{input.dim(0), input.dim(1), ho, wo}, std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && input.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto id = input.d_;
    auto od = out.d_;
    tape->record([id, od, argmax, planes, h, w, ho, wo]() {
      if (od->grad.empty() || !id->requires_grad) return;
      std::vector<double>& gi = grad_buf(id);
      const std::vector<double>& go = od->grad;
      for (std::size_t pl = 0; pl < planes; ++pl) {
        const double* gp = go.data() + pl * ho * wo;
        const std::uint32_t* am = argmax->data() + pl * ho * wo;
        double* ip = gi.data() + pl * h * w;
        for (std::size_t i = 0; i < ho * wo; ++i) ip[am[i]] += gp[i];
      }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> instance_mean_var(const Tensor& input) {
  require(input.ndim() == 4, "instance_mean_var: input must be [B,C,H,W], got " +
                                 shape_str(input.shape()));
  require(input.dim(2) * input.dim(3) >= 1, "instance_mean_var: empty spatial extent");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t hw = input.dim(2) * input.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> mv(planes), vv(planes);
  const double* in = input.values().data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* ip = in + pl * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += ip[i];
    const double m = s * inv;
    double sq = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double d = ip[i] - m;
      sq += d * d;
    }
    mv[pl] = m;
    vv[pl] = sq * inv;
  }
  Shape os{input.dim(0), input.dim(1)};
  Tensor mean_t(os, std::move(mv));
  Tensor var_t(os, std::move(vv));
  Tape* tape = Tape::current();
  const bool rg = tape && input.requires_grad();
  mean_t.set_requires_grad(rg);
  var_t.set_requires_grad(rg);
  if (rg) {
    auto id = input.d_;
    auto md = mean_t.d_;
    auto vd = var_t.d_;
    tape->record([id, md, vd, planes, hw, inv]() {
      if ((md->grad.empty() && vd->grad.empty()) || !id->requires_grad) return;
      std::vector<double>& gi = grad_buf(id);
      const double* in2 = id->values.data();
      const double* gm = md->grad.empty() ? nullptr : md->grad.data();
      const double* gv = vd->grad.empty() ? nullptr : vd->grad.data();
      const double* mv2 = md->values.data();
      for (std::size_t pl = 0; pl < planes; ++pl) {
        const double gmean = gm ? gm[pl] * inv : 0.0;
        const double gvar = gv ? gv[pl] * 2.0 * inv : 0.0;
        const double m = mv2[pl];
        double* gp = gi.data() + pl * hw;
        const double* ip = in2 + pl * hw;
        for (std::size_t i = 0; i < hw; ++i)
          gp[i] += gmean + gvar * (ip[i] - m);
      }
    });
  }
  return {mean_t, var_t};
}

Tensor l2_normalize_rows(const Tensor& a) {
  require(a.ndim() == 2, "l2_normalize_rows expects a 2-D tensor, got " +
                             shape_str(a.shape()));
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<double> ov(n * d);
  auto norms = std::make_shared<std::vector<double>>(n);
  const double* ap = a.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = ap + i * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * row[j];
    const double nm = std::sqrt(s + 1e-24);
    (*norms)[i] = nm;
    double* orow = ov.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) orow[j] = row[j] / nm;
  }
  Tensor out(a.shape(), std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    tape->record([ad, od, norms, n, d]() {
      if (od->grad.empty() || !ad->requires_grad) return;
      std::vector<double>& ga = grad_buf(ad);
      const std::vector<double>& go = od->grad;
      const std::vector<double>& y = od->values;
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = go.data() + i * d;
        const double* yrow = y.data() + i * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += grow[j] * yrow[j];
        const double inv = 1.0 / (*norms)[i];
        double* arow = ga.data() + i * d;
        for (std::size_t j = 0; j < d; ++j)
          arow[j] += (grow[j] - yrow[j] * dot) * inv;
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  require(a.ndim() == 2, "log_softmax_rows expects a 2-D tensor, got " +
                             shape_str(a.shape()));
  const std::size_t n = a.dim(0), c = a.dim(1);
  std::vector<double> ov(n * c);
  const double* ap = a.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = ap + i * c;
    double m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - m);
    lse = std::log(lse) + m;
    double* orow = ov.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) orow[j] = row[j] - lse;
  }
  Tensor out(a.shape(), std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && a.requires_grad();
  out.set_requires_grad(rg);
  if (rg) {
    auto ad = a.d_;
    auto od = out.d_;
    tape->record([ad, od, n, c]() {
      if (od->grad.empty() || !ad->requires_grad) return;
      std::vector<double>& ga = grad_buf(ad);
      const std::vector<double>& go = od->grad;
      const std::vector<double>& y = od->values;
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = go.data() + i * c;
        const double* yrow = y.data() + i * c;
        double gsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) gsum += grow[j];
        double* arow = ga.data() + i * c;
        for (std::size_t j = 0; j < c; ++j)
          arow[j] += grow[j] - std::exp(yrow[j]) * gsum;
      }
    });
  }
  return out;
}

Tensor gaussian_pair_log_density(const Tensor& mean, const Tensor& log_var,
                                 const Tensor& target) {
  require(mean.ndim() == 2 && log_var.ndim() == 2 && target.ndim() == 2,
          "gaussian_pair_log_density expects 2-D tensors");
  require(mean.shape() == log_var.shape(),
          "gaussian_pair_log_density: mean " + shape_str(mean.shape()) +
              " and log_var " + shape_str(log_var.shape()) + " differ");
  require(mean.dim(1) == target.dim(1),
          "gaussian_pair_log_density: feature dims differ, mean " +
              shape_str(mean.shape()) + " vs target " + shape_str(target.shape()));
  const std::size_t n = mean.dim(0), m = target.dim(0), d = mean.dim(1);
  constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)
  std::vector<double> ov(n * m);
  {
    const double* mu = mean.values().data();
    const double* lv = log_var.values().data();
    const double* tg = target.values().data();
    std::vector<double> inv_var(d), base(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* lvrow = lv + i * d;
      double b = 0.0;
      for (std::size_t t = 0; t < d; ++t) b += -kHalfLog2Pi - 0.5 * lvrow[t];
      base[i] = b;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* murow = mu + i * d;
      const double* lvrow = lv + i * d;
      for (std::size_t t = 0; t < d; ++t) inv_var[t] = std::exp(-lvrow[t]);
      double* orow = ov.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) {
        const double* trow = tg + j * d;
        double q = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
          const double r = trow[t] - murow[t];
          q += r * r * inv_var[t];
        }
        orow[j] = base[i] - 0.5 * q;
      }
    }
  }
  Tensor out(Shape{n, m}, std::move(ov));
  Tape* tape = Tape::current();
  const bool rg = tape && (mean.requires_grad() || log_var.requires_grad() ||
                           target.requires_grad());
  out.set_requires_grad(rg);
  if (rg) {
    auto md = mean.d_;
    auto ld = log_var.d_;
    auto td = target.d_;
    auto od = out.d_;
    tape->record([md, ld, td, od, n, m, d]() {
      if (od->grad.empty()) return;
      const double* go = od->grad.data();
      const double* mu = md->values.data();
      const double* lv = ld->values.data();
      const double* tg = td->values.data();
      double* gmu = md->requires_grad ? grad_buf(md).data() : nullptr;
      double* glv = ld->requires_grad ? grad_buf(ld).data() : nullptr;
      double* gtg = td->requires_grad ? grad_buf(td).data() : nullptr;
      if (!gmu && !glv && !gtg) return;
      std::vector<double> inv_var(d);
      for (std::size_t i = 0; i < n; ++i) {
        const double* murow = mu + i * d;
        const double* lvrow = lv + i * d;
        for (std::size_t t = 0; t < d; ++t) inv_var[t] = std::exp(-lvrow[t]);
        const double* grow = go + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          const double g = grow[j];
          if (g == 0.0) continue;
          const double* trow = tg + j * d;
          for (std::size_t t = 0; t < d; ++t) {
            const double r = (trow[t] - murow[t]) * inv_var[t];
            if (gmu) gmu[i * d + t] += g * r;
            if (gtg) gtg[j * d + t] -= g * r;
            if (glv)
              glv[i * d + t] += g * (-0.5 + 0.5 * (trow[t] - murow[t]) * r);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace l2d
