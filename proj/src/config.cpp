// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "l2d/dataset.hpp"

namespace l2d {

namespace {

[[noreturn]] void fail_at(const std::string& origin, std::size_t line,
                          const std::string& what) {
  throw std::invalid_argument("config " + origin + ":" + std::to_string(line) +
                              ": " + what);
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw std::invalid_argument("expected a number, got \"" + v + "\"");
  }
  return x;
}

long long parse_int(const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw std::invalid_argument("expected an integer, got \"" + v + "\"");
  }
  return x;
}

std::size_t parse_size(const std::string& v) {
  const long long x = parse_int(v);
  if (x < 0) throw std::invalid_argument("expected a non-negative integer");
  return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("expected 0/1/true/false, got \"" + v + "\"");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// One table drives parsing, default detection, and snapshotting.
struct KeySpec {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = {
      {"alpha1",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.alpha1 = parse_double(v);
        },
        [](const ExperimentConfig& c) { return format_double(c.train.alpha1); }}},
      {"alpha2",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.alpha2 = parse_double(v);
        },
        [](const ExperimentConfig& c) { return format_double(c.train.alpha2); }}},
      {"beta",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.beta = parse_double(v);
        },
        [](const ExperimentConfig& c) { return format_double(c.train.beta); }}},
      {"temperature",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.temperature = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.train.temperature);
        }}},
      {"k_transforms",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.k_transforms = parse_size(v);
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.train.k_transforms);
        }}},
      {"batch_size",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.batch_size = parse_size(v);
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.train.batch_size);
        }}},
      {"epochs",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.epochs = parse_size(v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.train.epochs); }}},
      {"lr_task",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.lr_task = parse_double(v);
        },
        [](const ExperimentConfig& c) { return format_double(c.train.lr_task); }}},
      {"lr_generator",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.lr_generator = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.train.lr_generator);
        }}},
      {"momentum",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.momentum = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.train.momentum);
        }}},
      {"weight_decay",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.weight_decay = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.train.weight_decay);
        }}},
      {"nesterov",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.nesterov = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.train.nesterov ? "1" : "0");
        }}},
      {"cosine",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.cosine = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.train.cosine ? "1" : "0");
        }}},
      {"clip_norm",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.clip_norm = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.train.clip_norm);
        }}},
      {"seed",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.seed = static_cast<std::uint64_t>(parse_int(v));
        },
        [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }}},
      {"ablation",
       {[](ExperimentConfig& c, const std::string& v) {
          c.train.ablation = ablation_from_name(v);
        },
        [](const ExperimentConfig& c) {
          return std::string(ablation_name(c.train.ablation));
        }}},
      {"train_images",
       {[](ExperimentConfig& c, const std::string& v) { c.train_images = v; },
        [](const ExperimentConfig& c) { return c.train_images; }}},
      {"train_labels",
       {[](ExperimentConfig& c, const std::string& v) { c.train_labels = v; },
        [](const ExperimentConfig& c) { return c.train_labels; }}},
      {"test_images",
       {[](ExperimentConfig& c, const std::string& v) { c.test_images = v; },
        [](const ExperimentConfig& c) { return c.test_images; }}},
      {"test_labels",
       {[](ExperimentConfig& c, const std::string& v) { c.test_labels = v; },
        [](const ExperimentConfig& c) { return c.test_labels; }}},
      {"out_dir",
       {[](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
        [](const ExperimentConfig& c) { return c.out_dir; }}},
      {"shift_kind",
       {[](ExperimentConfig& c, const std::string& v) {
          if (!v.empty()) shift_kind_from_name(v);  // validates
          c.shift_kind = v;
        },
        [](const ExperimentConfig& c) { return c.shift_kind; }}},
      {"shift_severity",
       {[](ExperimentConfig& c, const std::string& v) {
          const long long s = parse_int(v);
          if (s < 0 || s > 5) {
            throw std::invalid_argument("shift_severity outside [0,5]");
          }
          c.shift_severity = static_cast<int>(s);
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.shift_severity);
        }}},
  };
  return table;
}

}  // namespace

LoadedConfig parse_config_text(const std::string& text,
                               const std::string& origin) {
  LoadedConfig out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail_at(origin, line_no, "expected key=value, got \"" + line + "\"");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = key_table().find(key);
    if (it == key_table().end()) {
      fail_at(origin, line_no, "unknown key \"" + key + "\"");
    }
    if (!seen.insert(key).second) {
      fail_at(origin, line_no, "duplicate key \"" + key + "\"");
    }
    try {
      it->second.set(out.config, value);
    } catch (const std::exception& e) {
      fail_at(origin, line_no, std::string(e.what()));
    }
  }
  for (const auto& [key, spec] : key_table()) {
    if (seen.count(key) == 0) {
      out.notices.push_back("config: " + key + " defaulted to \"" +
                            spec.get(out.config) + "\"");
    }
  }
  return out;
}

LoadedConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config " + path + ": cannot open for reading");
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

std::string config_snapshot(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, spec] : key_table()) {
    out += key + "=" + spec.get(config) + "\n";
  }
  return out;
}

}  // namespace l2d
