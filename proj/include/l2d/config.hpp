// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "l2d/trainer.hpp"

namespace l2d {

// Full experiment description: training hyper-parameters, data file paths,
// output directory, and an optional extra evaluation shift.
struct ExperimentConfig {
  TrainConfig train;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::string out_dir = "out";
  // When non-empty, `eval` appends apply_shift(test, {shift_kind,
  // shift_severity}) as one extra target domain.
  std::string shift_kind;
  int shift_severity = 3;
};

struct LoadedConfig {
  ExperimentConfig config;
  // One human-readable line per key that fell back to its default.
  std::vector<std::string> notices;
};

// Plain key=value format, one pair per line; `#` starts a comment; blank
// lines ignored. Unknown keys, duplicate keys, and malformed values are
// rejected with the offending line number. Every key is optional.
LoadedConfig parse_config_text(const std::string& text,
                               const std::string& origin);
LoadedConfig parse_config_file(const std::string& path);

// Serializes every key (resolved values, sorted by key); parsing the
// snapshot reproduces the config exactly.
std::string config_snapshot(const ExperimentConfig& config);

}  // namespace l2d
