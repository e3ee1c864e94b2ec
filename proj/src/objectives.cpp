// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace l2d {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("l2d: " + msg);
}

Tensor uniform_init(Shape shape, double bound, RandomStream& rng) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

Tensor identity_matrix(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor(Shape{n, n}, std::move(v));
}

void check_paired(const Tensor& z, const Tensor& z_plus, const char* op) {
  if (z.ndim() != 2 || z_plus.ndim() != 2 || z.shape() != z_plus.shape())
    fail(std::string(op) + ": z and z⁺ must be identically shaped 2-D batches, got " +
         shape_str(z.shape()) + " and " + shape_str(z_plus.shape()));
}

// Pairwise squared distances via the expansion ‖a‖² + ‖b‖² − 2a·b.
Tensor pairwise_sqdist(const Tensor& a, const Tensor& b) {
  Tensor a2 = sum(a * a, 1, true);                 // [n,1]
  Tensor b2 = transpose(sum(b * b, 1, true));      // [1,m]
  Tensor ab = matmul(a, transpose(b));             // [n,m]
  return a2 + b2 - 2.0 * ab;
}

}  // namespace

VariationalGaussianHead::VariationalGaussianHead(std::size_t dim,
                                                 RandomStream& rng)
    : dim_(dim) {
  if (dim == 0) fail("VariationalGaussianHead: dim must be positive");
  const std::size_t hidden = 2 * dim;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1_ = uniform_init({hidden, dim}, b1, rng);
  b1_ = uniform_init({hidden}, b1, rng);
  wm_ = uniform_init({dim, hidden}, b2, rng);
  bm_ = uniform_init({dim}, b2, rng);
  wl_ = uniform_init({dim, hidden}, b2, rng);
  bl_ = uniform_init({dim}, b2, rng);
}

std::pair<Tensor, Tensor> VariationalGaussianHead::forward(const Tensor& z) const {
  if (z.ndim() != 2 || z.dim(1) != dim_)
    fail("VariationalGaussianHead: expected [N," + std::to_string(dim_) +
         "] input, got " + shape_str(z.shape()));
  Tensor h = tanh(linear(z, w1_, b1_));
  Tensor mean = linear(h, wm_, bm_);
  Tensor log_var = clamp(linear(h, wl_, bl_), -10.0, 10.0);
  return {mean, log_var};
}

std::vector<Tensor> VariationalGaussianHead::params() {
  return {w1_, b1_, wm_, bm_, wl_, bl_};
}

std::vector<std::pair<std::string, Tensor>> VariationalGaussianHead::named_params() {
  return {{"q.w1", w1_}, {"q.b1", b1_}, {"q.wm", wm_},
          {"q.bm", bm_}, {"q.wl", wl_}, {"q.bl", bl_}};
}

void VariationalGaussianHead::set_requires_grad(bool rg) {
  for (Tensor& t : params()) t.set_requires_grad(rg);
}

Tensor club_from_params(const Tensor& mean, const Tensor& log_var,
                        const Tensor& z_plus) {
  check_paired(mean, z_plus, "club_from_params");
  const std::size_t n = mean.dim(0);
  if (n < 2) fail("club_from_params: needs N ≥ 2 for the cross-pair term");
  // M[i,j] = log q(z⁺_j | z_i)
  Tensor m = gaussian_pair_log_density(mean, log_var, z_plus);
  const double dn = static_cast<double>(n);
  Tensor diag_mean = sum(m * identity_matrix(n)) / dn;
  Tensor full_mean = sum(m) / (dn * dn);
  return diag_mean - full_mean;
}

Tensor club_estimate(const Tensor& z, const Tensor& z_plus,
                     const VariationalGaussianHead& q) {
  check_paired(z, z_plus, "club_estimate");
  auto [mu, lv] = q.forward(z);
  return club_from_params(mu, lv, z_plus);
}

Tensor likelihood_from_params(const Tensor& mean, const Tensor& log_var,
                              const Tensor& z_plus) {
  check_paired(mean, z_plus, "likelihood_from_params");
  Tensor diff = z_plus - mean;
  Tensor log_density =
      -kHalfLog2Pi - 0.5 * log_var - diff * diff / (2.0 * exp(log_var));
  return -(sum(log_density) / static_cast<double>(mean.dim(0)));
}

Tensor likelihood_loss(const Tensor& z, const Tensor& z_plus,
                       const VariationalGaussianHead& q) {
  check_paired(z, z_plus, "likelihood_loss");
  auto [mu, lv] = q.forward(z);
  return likelihood_from_params(mu, lv, z_plus);
}

Tensor supcon_loss(const Tensor& embeddings, const std::vector<int>& labels,
                   const ContrastiveConfig& cfg, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (embeddings.ndim() != 2)
    fail("supcon_loss: embeddings must be [N,D], got " +
         shape_str(embeddings.shape()));
  const std::size_t n = embeddings.dim(0);
  if (labels.size() != n)
    fail("supcon_loss: " + std::to_string(labels.size()) + " labels for " +
         std::to_string(n) + " embeddings");
  if (n < 2) fail("supcon_loss: needs N ≥ 2");
  if (cfg.temperature <= 0.0) fail("supcon_loss: temperature must be positive");

  // per-anchor positive weights 1/|P(i)| and the diagonal exclusion mask
  std::vector<double> w(n * n, 0.0), mask(n * n, 0.0);
  bool any_positive = false;
  for (std::size_t i = 0; i < n; ++i) {
    mask[i * n + i] = -1e9;
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) ++count;
    if (count == 0) continue;
    any_positive = true;
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) w[i * n + j] = inv;
  }
  if (!any_positive) {
    if (degenerate) *degenerate = true;
    return Tensor::scalar(0.0);
  }
  Tensor sim = matmul(embeddings, transpose(embeddings)) * (1.0 / cfg.temperature);
  Tensor logits = sim + Tensor(Shape{n, n}, std::move(mask));
  Tensor log_prob = log_softmax_rows(logits);
  return -sum(log_prob * Tensor(Shape{n, n}, std::move(w)));
}

Tensor class_conditional_mmd(const Tensor& z, const std::vector<int>& labels_z,
                             const Tensor& z_plus,
                             const std::vector<int>& labels_plus,
                             const MMDConfig& cfg, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (z.ndim() != 2 || z_plus.ndim() != 2 || z.dim(1) != z_plus.dim(1))
    fail("class_conditional_mmd: latents must be 2-D with a common feature dim, got " +
         shape_str(z.shape()) + " and " + shape_str(z_plus.shape()));
  if (labels_z.size() != z.dim(0) || labels_plus.size() != z_plus.dim(0))
    fail("class_conditional_mmd: label counts do not match batch sizes");

  std::map<int, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < labels_z.size(); ++i)
    groups[labels_z[i]].first.push_back(i);
  for (std::size_t i = 0; i < labels_plus.size(); ++i)
    groups[labels_plus[i]].second.push_back(i);

  std::vector<int> contributing;
  for (const auto& [cls, idx] : groups)
    if (!idx.first.empty() && !idx.second.empty()) contributing.push_back(cls);
  if (contributing.empty()) {
    if (degenerate) *degenerate = true;
    return Tensor::scalar(0.0);
  }

  double bandwidth = 1.0;
  if (cfg.kernel == MMDConfig::Kernel::rbf && cfg.fixed_bandwidth > 0.0) {
    bandwidth = cfg.fixed_bandwidth;
  } else if (cfg.kernel == MMDConfig::Kernel::rbf) {
    // median heuristic over the pooled contributing rows; a plain constant,
    // gradients do not flow through it
    std::vector<const double*> rows;
    const std::size_t d = z.dim(1);
    for (int cls : contributing) {
      for (std::size_t i : groups[cls].first)
        rows.push_back(z.values().data() + i * d);
      for (std::size_t i : groups[cls].second)
        rows.push_back(z_plus.values().data() + i * d);
    }
    std::vector<double> dists;
    dists.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
          const double r = rows[i][t] - rows[j][t];
          s += r * r;
        }
        dists.push_back(s);
      }
    if (!dists.empty()) {
      std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                       dists.end());
      const double med = dists[dists.size() / 2];
      if (med > 0.0) bandwidth = med;
    }
  }

  Tensor total = Tensor::scalar(0.0);
  for (int cls : contributing) {
    Tensor s = take_rows(z, groups[cls].first);
    Tensor t = take_rows(z_plus, groups[cls].second);
    if (cfg.kernel == MMDConfig::Kernel::linear) {
      Tensor diff = mean(s, 0) - mean(t, 0);
      total = total + sum(diff * diff);
    } else {
      Tensor kss = exp(-pairwise_sqdist(s, s) / bandwidth);
      Tensor kst = exp(-pairwise_sqdist(s, t) / bandwidth);
      Tensor ktt = exp(-pairwise_sqdist(t, t) / bandwidth);
      total = total + mean(kss) - 2.0 * mean(kst) + mean(ktt);
    }
  }
  return total / static_cast<double>(contributing.size());
}

namespace {

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      fail("label " + std::to_string(labels[i]) + " out of range for " +
           std::to_string(classes) + " classes");
    v[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor(Shape{labels.size(), classes}, std::move(v));
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2 || logits.dim(0) != labels.size())
    fail("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
         std::to_string(labels.size()) + " labels");
  Tensor lsm = log_softmax_rows(logits);
  Tensor oh = one_hot(labels, logits.dim(1));
  return -(sum(lsm * oh) / static_cast<double>(labels.size()));
}

Tensor cross_entropy_task(const Tensor& logits, const Tensor& logits_plus,
                          const std::vector<int>& labels) {
  if (logits.shape() != logits_plus.shape())
    fail("cross_entropy_task: logit shapes differ, " + shape_str(logits.shape()) +
         " vs " + shape_str(logits_plus.shape()));
  if (logits.ndim() != 2 || logits.dim(0) != labels.size())
    fail("cross_entropy_task: logits " + shape_str(logits.shape()) + " vs " +
         std::to_string(labels.size()) + " labels");
  Tensor oh = one_hot(labels, logits.dim(1));
  Tensor picked = sum(log_softmax_rows(logits) * oh) +
                  sum(log_softmax_rows(logits_plus) * oh);
  return -(picked / (2.0 * static_cast<double>(labels.size())));
}

Tensor infonce_estimate(const Tensor& z, const Tensor& z_plus) {
  check_paired(z, z_plus, "infonce_estimate");
  const std::size_t n = z.dim(0);
  if (n < 2) fail("infonce_estimate: needs N ≥ 2");
  const double scale = 1.0 / std::sqrt(static_cast<double>(z.dim(1)));
  Tensor scores = matmul(z, transpose(z_plus)) * scale;
  Tensor lsm = log_softmax_rows(scores);
  // mean of the diagonal log-softmax plus log N; ≤ log N because the
  // diagonal log-probabilities are ≤ 0
  return sum(lsm * identity_matrix(n)) / static_cast<double>(n) +
         std::log(static_cast<double>(n));
}

}  // namespace l2d
