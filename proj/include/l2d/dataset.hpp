// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l2d/tensor.hpp"

namespace l2d {

// Immutable labeled image set. Images are [N,3,32,32] with values in
// [-1,1]; labels are ints in [0, num_classes).
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 10;
  std::string name;

  std::size_t size() const { return labels.size(); }
  // Throws std::invalid_argument on any broken invariant.
  void validate() const;
};

// Raw 28x28 grayscale corpus in IDX byte form (one byte per pixel,
// row-major, 0 = black background, 255 = brightest ink).
struct RawDigits {
  std::vector<std::uint8_t> images;  // n * 28 * 28 bytes
  std::vector<std::uint8_t> labels;  // n bytes
  std::size_t size() const { return labels.size(); }
};

// IDX (big-endian) file pair, the classic MNIST serialization.
LabeledDataset load_idx(const std::string& image_path,
                        const std::string& label_path);
void write_idx(const RawDigits& data, const std::string& image_path,
               const std::string& label_path);

// Procedurally rendered digit corpus: a 5x7 glyph per class, warped by a
// per-image random affine (rotation, scale, shear, translation), softened
// and intensity-jittered. Labels cycle 0..9 so every class is equally
// represented. Deterministic in the seed.
RawDigits make_synthetic_digits(std::size_t n, std::uint64_t seed);

// Domain-shift transforms.
enum class ShiftKind { noise, blur, fog, invert, pixelate };

struct ShiftSpec {
  ShiftKind kind = ShiftKind::noise;
  int severity = 3;  // 0 = identity, 1..5 increasing strength
};

const char* shift_kind_name(ShiftKind kind);
// CIFAR-10-C style family: noise | blur | weather | digital.
const char* shift_family(ShiftKind kind);
ShiftKind shift_kind_from_name(const std::string& name);

// Label-preserving pixel transform, deterministic per seed, output clamped
// to [-1,1]. Severity 0 returns the input unchanged.
LabeledDataset apply_shift(const LabeledDataset& source, const ShiftSpec& spec,
                           std::uint64_t seed);

// Fixed suite of shifted target domains used for generalization reports:
// inverted, colored-background composite, noise s3, blur s3, pixelate s3.
std::vector<LabeledDataset> make_eval_suite(const LabeledDataset& source,
                                            std::uint64_t seed);

// Dataset cache on disk (checkpoint container plus a labels array).
void save_dataset_cache(const std::string& path, const LabeledDataset& data);
LabeledDataset load_dataset_cache(const std::string& path,
                                  const std::string& name);

}  // namespace l2d
