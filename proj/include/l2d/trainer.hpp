// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "l2d/dataset.hpp"
#include "l2d/objectives.hpp"
#include "l2d/optimizer.hpp"
#include "l2d/rng.hpp"
#include "l2d/style_complement.hpp"
#include "l2d/task_model.hpp"
#include "l2d/tensor.hpp"

namespace l2d {

// Ablation variants:
//   full      - the whole method
//   no_style  - no generated images at all (plain source training)
//   no_mod    - generator runs but mean/variance shifts stay pinned at
//               identity; its optimization step is a no-op
//   no_min_mi - generator ignores the MI term, optimizes consistency only
//   no_max_mi - task step drops the supervised contrastive term
enum class Ablation { full, no_style, no_mod, no_min_mi, no_max_mi };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct TrainConfig {
  // The contrastive loss sums over all 2*batch_size anchors, so its
  // gradient scale grows with the batch; the default weight 1/(2*32)
  // restores an effective per-anchor weighting of 1 at the default batch
  // size. Scale alpha1 by 32/batch_size when changing batch_size.
  double alpha1 = 0.015625;
  double alpha2 = 1.0;  // likelihood weight (trains the variational head)
  double beta = 1.0;         // generator consistency weight
  double temperature = 0.1;  // supcon temperature
  std::size_t k_transforms = 6;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  double lr_task = 1e-2;
  double lr_generator = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;  // applied to task parameters only
  bool nesterov = false;
  bool cosine = false;  // cosine-decay both learning rates over the run
  // Global-norm gradient clip applied per parameter group (model, q, and
  // generator separately) before each optimizer update; 0 disables. The
  // likelihood term's learned variance makes q's loss surface stiff enough
  // that bare SGD with momentum overshoots into divergence on some seeds;
  // clipping q separately keeps those spikes from rescaling the model's
  // own gradient. Healthy model-group steps at the default geometry stay
  // well under this threshold.
  double clip_norm = 25.0;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::full;

  void validate() const;
};

struct MetricRow {
  std::size_t epoch;
  std::string split;
  std::string metric;
  double value;
};

// Append-only metric log; every recorded value must be finite.
struct RunMetrics {
  std::vector<MetricRow> rows;

  void add(std::size_t epoch, const std::string& split,
           const std::string& metric, double value);
  // Looks up a previously recorded row; throws if absent.
  double value(std::size_t epoch, const std::string& metric,
               const std::string& split = "train") const;
  // Header `epoch,split,metric,value`, values printed with %.17g.
  std::string to_csv() const;
};

struct DomainResult {
  std::string domain;
  std::size_t n = 0;
  double accuracy = 0.0;
};

// Owns the task model F+H, the variational head q and the style-complement
// generator G, and runs the alternating two-step optimization: per
// mini-batch, re-randomize G's projections, take one generator step
// (minimize I-hat + beta * L_const over the style shifts), then one task
// step (minimize L_task + alpha1 * L_supcon + alpha2 * L_likeli over F, q
// and H on source plus generated images).
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const LabeledDataset& data);

  RunMetrics train();

  // One generator update on a batch. The caller is responsible for
  // re-randomizing the projections first (train() does this every
  // iteration). Returns the minimized objective value.
  double generator_step(const Tensor& x, const std::vector<int>& labels,
                        double lr_scale = 1.0);
  // One task update on a batch; x_plus may be left undefined for the
  // no_style ablation. Returns the minimized objective value.
  double task_step(const Tensor& x, const Tensor& x_plus,
                   const std::vector<int>& labels, double lr_scale = 1.0);
  // The task objective evaluated without recording or updating anything.
  double task_loss_value(const Tensor& x, const Tensor& x_plus,
                         const std::vector<int>& labels);
  // Generated counterpart of x using a fresh mixing draw, detached.
  Tensor make_x_plus(const Tensor& x);

  TaskModel& model() { return model_; }
  VariationalGaussianHead& q() { return q_; }
  StyleComplementModule& generator() { return generator_; }
  RandomStream& generator_stream() { return gen_rng_; }
  const TrainConfig& config() const { return cfg_; }
  // Pre-clip gradient norms of the most recent steps. The task step clips
  // the model and the variational head as separate groups; these report
  // the model group, the q group, and the generator group respectively.
  double last_task_grad_norm() const { return last_task_grad_norm_; }
  double last_q_grad_norm() const { return last_q_grad_norm_; }
  double last_gen_grad_norm() const { return last_gen_grad_norm_; }

  std::vector<std::pair<std::string, Tensor>> named_state();

 private:
  struct StepStats;
  Tensor compose_task_loss(const Tensor& x, const Tensor& x_plus,
                           const std::vector<int>& labels, StepStats* stats);

  TrainConfig cfg_;
  LabeledDataset data_;
  RandomStream init_rng_;
  RandomStream data_rng_;
  RandomStream gen_rng_;
  RandomStream mix_rng_;
  TaskModel model_;
  VariationalGaussianHead q_;
  StyleComplementModule generator_;
  SGD opt_task_;
  SGD opt_gen_;
  // running (epoch, iteration) for loss diagnostics
  std::size_t epoch_ = 0;
  std::size_t iteration_ = 0;
  double last_task_grad_norm_ = 0.0;
  double last_q_grad_norm_ = 0.0;
  double last_gen_grad_norm_ = 0.0;
  struct Accum;
  Accum* accum_ = nullptr;
};

// Per-domain argmax accuracy of a trained model.
std::vector<DomainResult> evaluate(const TaskModel& model,
                                   const std::vector<LabeledDataset>& domains);

}  // namespace l2d
