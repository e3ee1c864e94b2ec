// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace l2d {

struct MiBenchRow {
  double rho;        // pairwise Gaussian correlation
  double analytic;   // -(D/2) ln(1 - rho^2)
  double estimated;  // CLUB estimate with a freshly fitted q
};

// Gaussian MI oracle: draws N=4096 correlated pairs in D=8 dimensions for
// rho in {0, 0.3, 0.8}, fits the variational head by likelihood descent,
// and reports the CLUB estimate next to the analytic mutual information.
std::vector<MiBenchRow> run_mi_bench(std::uint64_t seed);

}  // namespace l2d
