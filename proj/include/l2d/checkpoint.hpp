// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "l2d/tensor.hpp"

namespace l2d {

// Binary container of named double arrays, used for model checkpoints and
// cached datasets. Layout (all integers little-endian, independent of host
// byte order):
//
//   8 bytes   magic "L2DCKPT1"
//   u64       array count
//   per array:
//     u32       name length, then that many name bytes
//     u32       rank, then rank u64 dims
//     f64 * n   values (IEEE-754 bit pattern, little-endian)
//
// Writes go to a temporary sibling file first and are renamed into place,
// so readers never observe a half-written checkpoint.
void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, Tensor>>& arrays);

std::vector<std::pair<std::string, Tensor>> load_arrays(
    const std::string& path);

// Copies values from `loaded` into same-named tensors of `dest` in place.
// Every dest entry must be matched with identical shape; extra loaded
// arrays are ignored (callers may bundle metadata alongside parameters).
void assign_named(const std::vector<std::pair<std::string, Tensor>>& loaded,
                  std::vector<std::pair<std::string, Tensor>> dest);

}  // namespace l2d
