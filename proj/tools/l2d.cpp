// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: train / eval / mi-bench / ablate.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "l2d/checkpoint.hpp"
#include "l2d/config.hpp"
#include "l2d/dataset.hpp"
#include "l2d/mi_bench.hpp"
#include "l2d/rng.hpp"
#include "l2d/trainer.hpp"

namespace {

using namespace l2d;

struct CommonOpts {
  std::string config_path;
  std::string checkpoint_path;
  std::string out_dir;  // overrides the config when non-empty
  std::string seed;     // overrides the config when non-empty
};

std::size_t max_threads() {
  const char* env = std::getenv("L2D_THREADS");
  if (env == nullptr) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v >= 1 ? static_cast<std::size_t>(v) : 1;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw std::runtime_error("write to " + tmp + " failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("rename to " + path + " failed");
  }
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
  LoadedConfig loaded = parse_config_file(opts.config_path);
  for (const std::string& notice : loaded.notices) {
    std::printf("%s\n", notice.c_str());
  }
  if (!opts.seed.empty()) {
    loaded.config.train.seed = std::strtoull(opts.seed.c_str(), nullptr, 10);
  }
  if (!opts.out_dir.empty()) loaded.config.out_dir = opts.out_dir;
  loaded.config.train.validate();
  return loaded.config;
}

LabeledDataset load_pair(const std::string& images, const std::string& labels,
                         const char* which) {
  if (images.empty() || labels.empty()) {
    throw std::invalid_argument(std::string("config: ") + which +
                                " image/label paths are required");
  }
  return load_idx(images, labels);
}

std::string format_accuracy(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<LabeledDataset> build_eval_domains(const ExperimentConfig& cfg) {
  LabeledDataset test =
      load_pair(cfg.test_images, cfg.test_labels, "test");
  std::vector<LabeledDataset> domains;
  domains.push_back(test);  // reported, excluded from the average
  for (LabeledDataset& d : make_eval_suite(test, cfg.train.seed)) {
    domains.push_back(std::move(d));
  }
  if (!cfg.shift_kind.empty()) {
    ShiftSpec spec{shift_kind_from_name(cfg.shift_kind), cfg.shift_severity};
    domains.push_back(apply_shift(test, spec, cfg.train.seed));
  }
  return domains;
}

// Per-domain accuracy with optional fan-out, capped by L2D_THREADS.
std::vector<DomainResult> evaluate_domains(
    const TaskModel& model, const std::vector<LabeledDataset>& domains) {
  const std::size_t workers =
      std::min(max_threads(), std::max<std::size_t>(domains.size(), 1));
  if (workers <= 1) return evaluate(model, domains);

  std::vector<DomainResult> results(domains.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < domains.size(); i += workers) {
        domains[i].validate();
        results[i] = {domains[i].name, domains[i].size(),
                      accuracy(model, domains[i].images, domains[i].labels)};
      }
    });
  }
  for (std::thread& t : pool) t.join();
  return results;
}

// results.csv: per-domain rows plus the unweighted mean over shifted
// domains; the source row is reported but not averaged.
std::string results_csv(const std::vector<DomainResult>& results) {
  std::string csv = "domain,n,accuracy\n";
  double sum = 0.0;
  std::size_t shifted = 0;
  for (const DomainResult& r : results) {
    csv += r.domain + "," + std::to_string(r.n) + "," +
           format_accuracy(r.accuracy) + "\n";
    if (r.domain != "source") {
      sum += r.accuracy;
      ++shifted;
    }
  }
  if (shifted > 0) {
    csv += "average," + std::to_string(0) + "," +
           format_accuracy(sum / static_cast<double>(shifted)) + "\n";
  }
  return csv;
}

int cmd_make_data(const std::string& out_dir, std::size_t train_count,
                  std::size_t test_count, std::uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  const RawDigits train = make_synthetic_digits(train_count, seed);
  // Decorrelate the held-out set from the training stream.
  const std::uint64_t test_seed = RandomStream(seed, "test-data").next_u64();
  const RawDigits test = make_synthetic_digits(test_count, test_seed);
  write_idx(train, out_dir + "/train-images.idx", out_dir + "/train-labels.idx");
  write_idx(test, out_dir + "/test-images.idx", out_dir + "/test-labels.idx");
  std::printf("wrote %zu train / %zu test digits under %s\n", train_count,
              test_count, out_dir.c_str());
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  ExperimentConfig cfg = resolve_config(opts);
  LabeledDataset data =
      load_pair(cfg.train_images, cfg.train_labels, "train");
  std::printf("training on %zu images (%s ablation, seed %llu)\n",
              data.size(), ablation_name(cfg.train.ablation),
              static_cast<unsigned long long>(cfg.train.seed));

  Trainer trainer(cfg.train, data);
  RunMetrics metrics = trainer.train();

  std::filesystem::create_directories(cfg.out_dir);
  write_text_atomic(cfg.out_dir + "/metrics.csv", metrics.to_csv());
  save_arrays(cfg.out_dir + "/checkpoint.bin", trainer.named_state());
  write_text_atomic(cfg.out_dir + "/config.txt", config_snapshot(cfg));

  const std::size_t last = cfg.train.epochs - 1;
  std::printf("final train accuracy %.4f, task loss %.4f\n",
              metrics.value(last, "accuracy"), metrics.value(last, "task_loss"));
  std::printf("wrote %s/metrics.csv, checkpoint.bin, config.txt\n",
              cfg.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonOpts& opts) {
  ExperimentConfig cfg = resolve_config(opts);
  if (opts.checkpoint_path.empty()) {
    throw std::invalid_argument("eval: --checkpoint is required");
  }

  RandomStream init(cfg.train.seed, "init");
  TaskModel model(10, init);
  assign_named(load_arrays(opts.checkpoint_path), model.named_params());

  std::vector<LabeledDataset> domains = build_eval_domains(cfg);
  std::vector<DomainResult> results = evaluate_domains(model, domains);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string csv = results_csv(results);
  write_text_atomic(cfg.out_dir + "/results.csv", csv);
  std::printf("%s", csv.c_str());
  std::printf("wrote %s/results.csv\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_mi_bench(const CommonOpts& opts) {
  const std::uint64_t seed =
      opts.seed.empty() ? 1 : std::strtoull(opts.seed.c_str(), nullptr, 10);
  const std::string out_dir = opts.out_dir.empty() ? "out" : opts.out_dir;

  std::vector<MiBenchRow> rows = run_mi_bench(seed);
  std::string csv = "rho,analytic_mi,estimated_mi\n";
  std::printf("%8s %14s %14s\n", "rho", "analytic", "estimated");
  for (const MiBenchRow& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", r.rho, r.analytic,
                  r.estimated);
    csv += buf;
    std::printf("%8.2f %14.4f %14.4f\n", r.rho, r.analytic, r.estimated);
  }
  std::filesystem::create_directories(out_dir);
  write_text_atomic(out_dir + "/mi_bench.csv", csv);
  std::printf("wrote %s/mi_bench.csv\n", out_dir.c_str());
  return 0;
}

int cmd_ablate(const CommonOpts& opts) {
  ExperimentConfig cfg = resolve_config(opts);
  LabeledDataset data =
      load_pair(cfg.train_images, cfg.train_labels, "train");
  std::vector<LabeledDataset> domains = build_eval_domains(cfg);

  std::string csv = "ablation,domain,n,accuracy\n";
  for (Ablation a : {Ablation::full, Ablation::no_style, Ablation::no_mod,
                     Ablation::no_min_mi, Ablation::no_max_mi}) {
    TrainConfig variant = cfg.train;
    variant.ablation = a;
    std::printf("ablate: training %s\n", ablation_name(a));
    Trainer trainer(variant, data);
    trainer.train();

    std::vector<DomainResult> results =
        evaluate_domains(trainer.model(), domains);
    double sum = 0.0;
    std::size_t shifted = 0;
    for (const DomainResult& r : results) {
      csv += std::string(ablation_name(a)) + "," + r.domain + "," +
             std::to_string(r.n) + "," + format_accuracy(r.accuracy) + "\n";
      if (r.domain != "source") {
        sum += r.accuracy;
        ++shifted;
      }
    }
    csv += std::string(ablation_name(a)) + ",average,0," +
           format_accuracy(sum / static_cast<double>(shifted)) + "\n";
  }

  std::filesystem::create_directories(cfg.out_dir);
  write_text_atomic(cfg.out_dir + "/ablate.csv", csv);
  std::printf("wrote %s/ablate.csv\n", cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-to-diversify single-domain-generalization trainer"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string data_dir = "data";
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
  std::uint64_t data_seed = 1;
  CLI::App* make_data = app.add_subcommand(
      "make-data", "write a synthetic digit corpus in IDX format");
  make_data->add_option("--out", data_dir, "output directory");
  make_data->add_option("--train-count", train_count, "training images");
  make_data->add_option("--test-count", test_count, "held-out images");
  make_data->add_option("--seed", data_seed, "corpus seed");

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  train->add_option("--out", opts.out_dir, "output directory override");
  train->add_option("--seed", opts.seed, "seed override");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  eval->add_option("--checkpoint", opts.checkpoint_path, "checkpoint to load")
      ->required();
  eval->add_option("--out", opts.out_dir, "output directory override");
  eval->add_option("--seed", opts.seed, "seed override");

  CLI::App* bench =
      app.add_subcommand("mi-bench", "CLUB estimator vs. the Gaussian oracle");
  bench->add_option("--seed", opts.seed, "bench seed");
  bench->add_option("--out", opts.out_dir, "output directory");

  CLI::App* ablate =
      app.add_subcommand("ablate", "train and compare all ablation variants");
  ablate->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  ablate->add_option("--out", opts.out_dir, "output directory override");
  ablate->add_option("--seed", opts.seed, "seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (make_data->parsed()) {
      return cmd_make_data(data_dir, train_count, test_count, data_seed);
    }
    if (train->parsed()) return cmd_train(opts);
    if (eval->parsed()) return cmd_eval(opts);
    if (bench->parsed()) return cmd_mi_bench(opts);
    if (ablate->parsed()) return cmd_ablate(opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
