// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace l2d {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<Tensor> concat_params(std::vector<Tensor> a,
                                  const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void require_finite(double v, const char* which, std::size_t epoch,
                    std::size_t iteration) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(
        "training diverged: non-finite " + std::string(which) +
        " loss at epoch " + std::to_string(epoch) + ", iteration " +
        std::to_string(iteration));
  }
}

}  // namespace

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_style: return "no_style";
    case Ablation::no_mod: return "no_mod";
    case Ablation::no_min_mi: return "no_min_mi";
    case Ablation::no_max_mi: return "no_max_mi";
  }
  throw std::invalid_argument("ablation_name: unknown variant");
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "full") return Ablation::full;
  if (name == "no_style") return Ablation::no_style;
  if (name == "no_mod") return Ablation::no_mod;
  if (name == "no_min_mi") return Ablation::no_min_mi;
  if (name == "no_max_mi") return Ablation::no_max_mi;
  throw std::invalid_argument("unknown ablation \"" + name + "\"");
}

void TrainConfig::validate() const {
  if (alpha1 < 0.0) throw std::invalid_argument("config: alpha1 must be >= 0");
  if (alpha2 < 0.0) throw std::invalid_argument("config: alpha2 must be >= 0");
  if (beta < 0.0) throw std::invalid_argument("config: beta must be >= 0");
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("config: temperature must be > 0");
  }
  if (k_transforms < 1) throw std::invalid_argument("config: k must be >= 1");
  if (batch_size < 2) {
    throw std::invalid_argument("config: batch_size must be >= 2");
  }
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (!(lr_task > 0.0) || !(lr_generator > 0.0)) {
    throw std::invalid_argument("config: learning rates must be > 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("config: momentum must be in [0,1)");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("config: weight_decay must be >= 0");
  }
  if (clip_norm < 0.0) {
    throw std::invalid_argument("config: clip_norm must be >= 0");
  }
}

void RunMetrics::add(std::size_t epoch, const std::string& split,
                     const std::string& metric, double value) {
  if (!std::isfinite(value)) {
    throw std::runtime_error("metrics: non-finite value for " + split + "/" +
                             metric + " at epoch " + std::to_string(epoch));
  }
  rows.push_back({epoch, split, metric, value});
}

double RunMetrics::value(std::size_t epoch, const std::string& metric,
                         const std::string& split) const {
  for (const MetricRow& r : rows) {
    if (r.epoch == epoch && r.metric == metric && r.split == split) {
      return r.value;
    }
  }
  throw std::out_of_range("metrics: no row for epoch " + std::to_string(epoch) +
                          " " + split + "/" + metric);
}

std::string RunMetrics::to_csv() const {
  std::string out = "epoch,split,metric,value\n";
  char buf[64];
  for (const MetricRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out += std::to_string(r.epoch) + "," + r.split + "," + r.metric + "," +
           buf + "\n";
  }
  return out;
}

// Per-epoch running means of everything the steps report.
struct Trainer::Accum {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  void add(const std::string& metric, double v) {
    auto& [sum, count] = sums[metric];
    sum += v;
    ++count;
  }
};

struct Trainer::StepStats {
  double ce = 0.0, supcon = 0.0, likeli = 0.0, batch_accuracy = 0.0;
};

Trainer::Trainer(const TrainConfig& cfg, const LabeledDataset& data)
    : cfg_(cfg),
      data_(data),
      init_rng_((cfg.validate(), data.validate(), cfg.seed), "init"),
      data_rng_(cfg.seed, "data"),
      gen_rng_(cfg.seed, "generator"),
      mix_rng_(cfg.seed, "mix-weights"),
      model_(data.num_classes, init_rng_),
      q_(84, init_rng_),
      generator_(cfg.k_transforms, 3, 32, 32),
      opt_task_(concat_params(model_.params(), q_.params()),
                {.lr = cfg.lr_task,
                 .momentum = cfg.momentum,
                 .weight_decay = cfg.weight_decay,
                 .nesterov = cfg.nesterov}),
      // no weight decay on the style shifts: decaying sigma_k toward zero
      // would drag the generator away from the identity configuration
      opt_gen_(generator_.trainable_params(), {.lr = cfg.lr_generator,
                                               .momentum = cfg.momentum,
                                               .weight_decay = 0.0,
                                               .nesterov = cfg.nesterov}) {
  if (data_.size() < cfg_.batch_size && data_.size() < 2) {
    throw std::invalid_argument("trainer: dataset too small");
  }
}

Tensor Trainer::make_x_plus(const Tensor& x) {
  auto [x_plus, weights] = generator_.generate(x, mix_rng_);
  (void)weights;
  return x_plus.detach();
}

double Trainer::generator_step(const Tensor& x, const std::vector<int>& labels,
                               double lr_scale) {
  if (cfg_.ablation == Ablation::no_style) {
    throw std::invalid_argument(
        "generator_step: undefined for the no_style ablation");
  }
  model_.set_requires_grad(false);
  q_.set_requires_grad(false);
  generator_.set_requires_grad(true);

  // z depends only on frozen parameters; keep it off the tape entirely.
  Tensor z = model_.embed(x);

  const bool update = cfg_.ablation != Ablation::no_mod;
  const bool use_mi = cfg_.ablation != Ablation::no_min_mi;

  double mi_value = 0.0, const_value = 0.0, total = 0.0;
  Tape tape;
  {
    TapeScope scope(tape);
    auto [x_plus, weights] = generator_.generate(x, mix_rng_);
    (void)weights;
    Tensor z_plus = model_.embed(x_plus);
    Tensor mi = club_estimate(z, z_plus, q_);
    Tensor consistency =
        class_conditional_mmd(z, labels, z_plus, labels, MMDConfig{});
    Tensor loss = use_mi ? mi + cfg_.beta * consistency
                         : Tensor(cfg_.beta * consistency);
    mi_value = mi.item();
    const_value = consistency.item();
    total = loss.item();
    require_finite(total, "generator", epoch_, iteration_);
    if (update) {
      opt_gen_.zero_grad();
      tape.backward(loss);
    }
  }
  if (update) {
    last_gen_grad_norm_ = clip_gradients(opt_gen_.params(), cfg_.clip_norm);
    opt_gen_.step(lr_scale);
    opt_gen_.zero_grad();
  }
  generator_.set_requires_grad(false);

  if (accum_ != nullptr) {
    accum_->add("gen_loss", total);
    accum_->add("mi_hat", mi_value);
    accum_->add("const", const_value);
  }
  return total;
}

Tensor Trainer::compose_task_loss(const Tensor& x, const Tensor& x_plus,
                                  const std::vector<int>& labels,
                                  StepStats* stats) {
  const bool no_style = cfg_.ablation == Ablation::no_style;
  const bool use_supcon =
      cfg_.ablation != Ablation::no_max_mi && cfg_.alpha1 > 0.0;

  Tensor z = model_.embed(x);
  Tensor z_plus = no_style ? z : model_.embed(x_plus);
  Tensor logits = model_.classify(z);
  Tensor logits_plus = no_style ? logits : model_.classify(z_plus);

  Tensor loss = cross_entropy_task(logits, logits_plus, labels);
  if (stats != nullptr) {
    stats->ce = loss.item();
    std::size_t hits = 0;
    const std::size_t c = data_.num_classes;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (logits.values()[i * c + j] > logits.values()[i * c + best]) {
          best = j;
        }
      }
      if (static_cast<int>(best) == labels[i]) ++hits;
    }
    stats->batch_accuracy =
        static_cast<double>(hits) / static_cast<double>(labels.size());
  }

  if (use_supcon) {
    std::vector<int> doubled(labels);
    doubled.insert(doubled.end(), labels.begin(), labels.end());
    Tensor embeddings = l2_normalize_rows(concat_rows(z, z_plus));
    Tensor supcon =
        supcon_loss(embeddings, doubled, {.temperature = cfg_.temperature});
    if (stats != nullptr) stats->supcon = supcon.item();
    loss = loss + cfg_.alpha1 * supcon;
  }
  if (cfg_.alpha2 > 0.0) {
    // The likelihood term fits the variational head only; the embeddings
    // enter detached so the task model cannot trade classification for
    // predictability (collapsing features to make q's job easy).
    Tensor likeli = likelihood_loss(z.detach(), z_plus.detach(), q_);
    if (stats != nullptr) stats->likeli = likeli.item();
    loss = loss + cfg_.alpha2 * likeli;
  }
  return loss;
}

double Trainer::task_step(const Tensor& x, const Tensor& x_plus,
                          const std::vector<int>& labels, double lr_scale) {
  generator_.set_requires_grad(false);
  model_.set_requires_grad(true);
  q_.set_requires_grad(true);

  StepStats stats;
  double total = 0.0;
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = compose_task_loss(x, x_plus, labels, &stats);
    total = loss.item();
    require_finite(total, "task", epoch_, iteration_);
    opt_task_.zero_grad();
    tape.backward(loss);
  }
  // Clip the model and the variational head as separate groups: the
  // likelihood term can spike q's gradient by orders of magnitude (its
  // learned variance makes that loss stiff), and under a single global
  // norm such spikes would scale the model's own gradient toward zero.
  std::vector<Tensor> model_group = model_.params();
  std::vector<Tensor> q_group = q_.params();
  last_task_grad_norm_ = clip_gradients(model_group, cfg_.clip_norm);
  last_q_grad_norm_ = clip_gradients(q_group, cfg_.clip_norm);
  opt_task_.step(lr_scale);
  opt_task_.zero_grad();

  if (accum_ != nullptr) {
    accum_->add("task_loss", total);
    accum_->add("ce", stats.ce);
    accum_->add("supcon", stats.supcon);
    accum_->add("likeli", stats.likeli);
    accum_->add("accuracy", stats.batch_accuracy);
  }
  return total;
}

double Trainer::task_loss_value(const Tensor& x, const Tensor& x_plus,
                                const std::vector<int>& labels) {
  return compose_task_loss(x, x_plus, labels, nullptr).item();
}

RunMetrics Trainer::train() {
  if (data_.size() < 2) throw std::invalid_argument("trainer: empty dataset");
  RunMetrics metrics;
  const std::size_t n = data_.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t batches_per_epoch =
      n / cfg_.batch_size + (n % cfg_.batch_size >= 2 ? 1 : 0);
  const std::size_t total_iters = cfg_.epochs * batches_per_epoch;
  std::size_t global_iter = 0;

  for (epoch_ = 0; epoch_ < cfg_.epochs; ++epoch_) {
    // Fisher-Yates off the dedicated data stream
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(
          data_rng_.uniform_int(0, static_cast<int>(i)));
      std::swap(order[i], order[j]);
    }

    Accum accum;
    accum_ = &accum;
    for (std::size_t start = 0; start < n; start += cfg_.batch_size) {
      const std::size_t count = std::min(cfg_.batch_size, n - start);
      if (count < 2) break;  // contrastive terms need at least two samples
      iteration_ = start / cfg_.batch_size;
      const double lr_scale =
          cfg_.cosine ? 0.5 * (1.0 + std::cos(kPi * static_cast<double>(
                                                  global_iter) /
                                              static_cast<double>(total_iters)))
                      : 1.0;

      std::vector<std::size_t> rows(order.begin() + start,
                                    order.begin() + start + count);
      Tensor x = take_rows(data_.images, rows);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = data_.labels[rows[i]];

      Tensor x_plus;
      if (cfg_.ablation != Ablation::no_style) {
        generator_.reinit(gen_rng_);
        if (cfg_.ablation == Ablation::no_mod) generator_.pin_identity();
        generator_step(x, labels, lr_scale);
        x_plus = make_x_plus(x);
      }
      task_step(x, x_plus, labels, lr_scale);
      ++global_iter;
    }
    accum_ = nullptr;

    for (const auto& [metric, pair] : accum.sums) {
      metrics.add(epoch_, "train", metric,
                  pair.first / static_cast<double>(pair.second));
    }
  }
  return metrics;
}

std::vector<std::pair<std::string, Tensor>> Trainer::named_state() {
  auto out = model_.named_params();
  for (auto& p : q_.named_params()) out.push_back(p);
  for (auto& p : generator_.named_params()) out.push_back(p);
  return out;
}

std::vector<DomainResult> evaluate(const TaskModel& model,
                                   const std::vector<LabeledDataset>& domains) {
  std::vector<DomainResult> results;
  results.reserve(domains.size());
  for (const LabeledDataset& d : domains) {
    d.validate();
    results.push_back({d.name, d.size(), accuracy(model, d.images, d.labels)});
  }
  return results;
}

}  // namespace l2d
