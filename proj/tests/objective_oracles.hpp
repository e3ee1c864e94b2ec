// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0
//
// Naive double/triple-loop reference implementations of every training
// objective, written directly against std::vector so they share no code with
// the library's tensor ops. The equivalence tests pin the library to these.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

namespace bruteforce {

inline double log_normal(double x, double mean, double log_var) {
  return -0.5 * std::log(2.0 * M_PI) - 0.5 * log_var -
         (x - mean) * (x - mean) / (2.0 * std::exp(log_var));
}

// CLUB from explicit per-row Gaussian parameters (row-major [n,d] buffers).
inline double club(const std::vector<double>& mu, const std::vector<double>& lv,
                   const std::vector<double>& zp, std::size_t n, std::size_t d) {
  double diag = 0.0, all = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t)
        s += log_normal(zp[j * d + t], mu[i * d + t], lv[i * d + t]);
      if (i == j) diag += s;
      all += s;
    }
  const double dn = static_cast<double>(n);
  return diag / dn - all / (dn * dn);
}

inline double likelihood(const std::vector<double>& mu,
                         const std::vector<double>& lv,
                         const std::vector<double>& zp, std::size_t n,
                         std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t)
      s += log_normal(zp[i * d + t], mu[i * d + t], lv[i * d + t]);
  return -s / static_cast<double>(n);
}

inline double supcon(const std::vector<double>& e, const std::vector<int>& labels,
                     std::size_t n, std::size_t d, double tau) {
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> positives;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) positives.push_back(j);
    if (positives.empty()) continue;
    // log-sum-exp over all other elements (max-shifted for stability)
    std::vector<double> sims(n, 0.0);
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += e[i * d + t] * e[j * d + t];
      sims[j] = dot / tau;
      mx = std::max(mx, sims[j]);
    }
    double lse = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) lse += std::exp(sims[j] - mx);
    lse = std::log(lse) + mx;
    double inner = 0.0;
    for (std::size_t p : positives) inner += sims[p] - lse;
    loss -= inner / static_cast<double>(positives.size());
  }
  return loss;
}

// Class-conditional MMD; bandwidth < 0 requests the median heuristic over
// the pooled contributing rows (lower median, matching the library rule).
inline double mmd(const std::vector<double>& z, const std::vector<int>& lz,
                  const std::vector<double>& zp, const std::vector<int>& lp,
                  std::size_t d, bool rbf, double bandwidth = -1.0) {
  std::map<int, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by;
  for (std::size_t i = 0; i < lz.size(); ++i) by[lz[i]].first.push_back(i);
  for (std::size_t i = 0; i < lp.size(); ++i) by[lp[i]].second.push_back(i);
  std::vector<int> classes;
  for (auto& [c, g] : by)
    if (!g.first.empty() && !g.second.empty()) classes.push_back(c);
  if (classes.empty()) return 0.0;

  auto sq = [&](const double* a, const double* b) {
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
      const double r = a[t] - b[t];
      s += r * r;
    }
    return s;
  };

  if (rbf && bandwidth <= 0.0) {
    std::vector<const double*> rows;
    for (int c : classes) {
      for (std::size_t i : by[c].first) rows.push_back(z.data() + i * d);
      for (std::size_t i : by[c].second) rows.push_back(zp.data() + i * d);
    }
    std::vector<double> dists;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j)
        dists.push_back(sq(rows[i], rows[j]));
    bandwidth = 1.0;
    if (!dists.empty()) {
      std::sort(dists.begin(), dists.end());
      if (dists[dists.size() / 2] > 0.0) bandwidth = dists[dists.size() / 2];
    }
  }

  auto kernel = [&](const double* a, const double* b) {
    if (!rbf) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += a[t] * b[t];
      return s;
    }
    return std::exp(-sq(a, b) / bandwidth);
  };

  double total = 0.0;
  for (int c : classes) {
    const auto& si = by[c].first;
    const auto& ti = by[c].second;
    double kss = 0.0, kst = 0.0, ktt = 0.0;
    for (std::size_t a : si)
      for (std::size_t b : si) kss += kernel(z.data() + a * d, z.data() + b * d);
    for (std::size_t a : si)
      for (std::size_t b : ti) kst += kernel(z.data() + a * d, zp.data() + b * d);
    for (std::size_t a : ti)
      for (std::size_t b : ti) ktt += kernel(zp.data() + a * d, zp.data() + b * d);
    const double ns = static_cast<double>(si.size());
    const double nt = static_cast<double>(ti.size());
    total += kss / (ns * ns) - 2.0 * kst / (ns * nt) + ktt / (nt * nt);
  }
  return total / static_cast<double>(classes.size());
}

inline double cross_entropy_task(const std::vector<double>& logits,
                                 const std::vector<double>& logits_plus,
                                 const std::vector<int>& labels, std::size_t c) {
  auto one = [&](const std::vector<double>& lg) {
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      double mx = lg[i * c];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lg[i * c + j]);
      double lse = 0.0;
      for (std::size_t j = 0; j < c; ++j) lse += std::exp(lg[i * c + j] - mx);
      lse = std::log(lse) + mx;
      loss -= lg[i * c + static_cast<std::size_t>(labels[i])] - lse;
    }
    return loss;
  };
  return (one(logits) + one(logits_plus)) / (2.0 * static_cast<double>(labels.size()));
}

inline double infonce(const std::vector<double>& z, const std::vector<double>& zp,
                      std::size_t n, std::size_t d) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  double est = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> f(n);
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += z[i * d + t] * zp[j * d + t];
      f[j] = dot * scale;
      mx = std::max(mx, f[j]);
    }
    double lse = 0.0;
    for (std::size_t j = 0; j < n; ++j) lse += std::exp(f[j] - mx);
    lse = std::log(lse) + mx;
    est += f[i] - lse;
  }
  return est / static_cast<double>(n) + std::log(static_cast<double>(n));
}

}  // namespace bruteforce
