#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tinybit/checkpoint.hpp"
#include "tinybit/config_json.hpp"
#include "tinybit/data.hpp"
#include "tinybit/hyperrule.hpp"
#include "tinybit/metrics.hpp"
#include "tinybit/model.hpp"
#include "tinybit/optim.hpp"

namespace tinybit {

// ---------------------------------------------------------------------------
// Train configuration
// ---------------------------------------------------------------------------

enum class TrainMode { kPretrain, kFinetune };

/// One training run, both phases. Pretrain uses the epoch-milestone schedule;
/// finetune loads a checkpoint, swaps the head, and follows a hyperrule
/// decision (derived from the dataset unless overridden).
struct TrainConfig {
  TrainMode mode = TrainMode::kPretrain;
  ResNetConfig model;
  LrSchedule schedule;  // pretrain recipe
  bool hyperrule_auto = true;
  std::optional<HyperRuleDecision> decision;  // finetune override
  std::string train_dir;
  std::string val_dir;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::string checkpoint_in;
  std::string checkpoint_out;
  std::string metrics_csv;
  int eval_every = 1;          // epochs between validation passes
  int resolution_override = 0; // 0 = follow the hyperrule resolution rule
  bool log_wall_time = true;   // false zeroes the CSV wall column (reproducible)

  void validate() const {
    if (train_dir.empty()) throw ConfigError("train config: train_dir is required");
    if (val_dir.empty()) throw ConfigError("train config: val_dir is required");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (eval_every < 1) throw ConfigError("train config: eval_every must be >= 1");
    if (mode == TrainMode::kFinetune && checkpoint_in.empty())
      throw ConfigError("train config: finetune requires checkpoint_in");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"mode", c.mode == TrainMode::kPretrain ? "pretrain" : "finetune"},
      {"model", c.model},
      {"schedule", c.schedule},
      {"hyperrule_auto", c.hyperrule_auto},
      {"train_dir", c.train_dir},
      {"val_dir", c.val_dir},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"checkpoint_in", c.checkpoint_in},
      {"checkpoint_out", c.checkpoint_out},
      {"metrics_csv", c.metrics_csv},
      {"eval_every", c.eval_every},
      {"resolution_override", c.resolution_override},
      {"log_wall_time", c.log_wall_time},
  };
  if (c.decision) j["decision"] = hyperrule_decision_json(*c.decision);
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("mode")) {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "pretrain")
      c.mode = TrainMode::kPretrain;
    else if (mode == "finetune")
      c.mode = TrainMode::kFinetune;
    else
      throw ConfigError("mode must be 'pretrain' or 'finetune', got '" + mode + "'");
  }
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("schedule")) j.at("schedule").get_to(c.schedule);
  if (j.contains("hyperrule_auto")) j.at("hyperrule_auto").get_to(c.hyperrule_auto);
  if (j.contains("decision"))
    c.decision = hyperrule_decision_from_json(j.at("decision"));
  if (j.contains("train_dir")) j.at("train_dir").get_to(c.train_dir);
  if (j.contains("val_dir")) j.at("val_dir").get_to(c.val_dir);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("checkpoint_in")) j.at("checkpoint_in").get_to(c.checkpoint_in);
  if (j.contains("checkpoint_out")) j.at("checkpoint_out").get_to(c.checkpoint_out);
  if (j.contains("metrics_csv")) j.at("metrics_csv").get_to(c.metrics_csv);
  if (j.contains("eval_every")) j.at("eval_every").get_to(c.eval_every);
  if (j.contains("resolution_override"))
    j.at("resolution_override").get_to(c.resolution_override);
  if (j.contains("log_wall_time")) j.at("log_wall_time").get_to(c.log_wall_time);
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint
// ---------------------------------------------------------------------------

inline Checkpoint make_checkpoint(const Model& model, std::int64_t epoch,
                                  std::int64_t step, const Prng& data_rng) {
  Checkpoint ckpt;
  ckpt.config = nlohmann::json{
      {"model", model.config},
      {"epoch", epoch},
      {"step", step},
      {"prng", {{"seed", data_rng.seed()}, {"state", data_rng.state()}}},
  };
  for (const auto& p : model.parameters())
    ckpt.tensors.push_back({p.name, *p.tensor});
  return ckpt;
}

/// Rebuild the model a checkpoint describes and load every tensor into it.
/// Mismatched keys or shapes raise with the offending names listed.
inline Model model_from_checkpoint(const Checkpoint& ckpt) {
  ResNetConfig cfg = ckpt.config.at("model").get<ResNetConfig>();
  Model model = build_model(cfg, 0);
  auto params = model.parameters();
  std::string complaints;
  if (params.size() != ckpt.tensors.size())
    complaints += "tensor count " + std::to_string(ckpt.tensors.size()) +
                  " != expected " + std::to_string(params.size()) + "; ";
  const std::size_t n = std::min(params.size(), ckpt.tensors.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (params[i].name != ckpt.tensors[i].name) {
      complaints += "key '" + ckpt.tensors[i].name + "' where '" +
                    params[i].name + "' expected; ";
      continue;
    }
    if (!params[i].tensor->same_shape(ckpt.tensors[i].tensor)) {
      complaints += "shape mismatch for '" + params[i].name + "'; ";
      continue;
    }
    *params[i].tensor = ckpt.tensors[i].tensor;
  }
  if (!complaints.empty())
    throw ShapeError("checkpoint does not match its own config: " + complaints);
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double loss = 0.0;
  double accuracy_pct = 0.0;
  ConfusionCounts confusion;  // meaningful for binary tasks only
};

/// Deterministic evaluation: resize + center crop, no augmentation, argmax
/// prediction with ties broken toward the lower class index. Accuracy for
/// binary tasks goes through the confusion counts; for K>2 it is the direct
/// fraction correct (the two coincide for K=2).
inline EvalResult evaluate(const Model& model, const Dataset& dataset,
                           int batch_size, int resolution) {
  if (dataset.items.empty()) throw DatasetError("evaluate: dataset is empty");
  if (dataset.num_classes() != model.config.num_classes)
    throw ConfigError("evaluate: dataset has " +
                      std::to_string(dataset.num_classes()) +
                      " classes, model expects " +
                      std::to_string(model.config.num_classes));
  AugmentSpec spec;
  spec.resize_to = resolution;
  spec.crop_to = resolution;
  spec.enabled = false;

  Prng unused(0);
  BatchIterator it(dataset, batch_size, unused, spec, /*shuffle=*/false);
  EvalResult result;
  const bool binary = model.config.num_classes == 2;
  double loss_sum = 0.0;
  std::int64_t seen = 0, correct = 0;
  while (auto batch = it.next()) {
    const Tensor logits = model.forward(batch->x);
    const auto [loss, grad] = softmax_cross_entropy(batch->labels, logits);
    (void)grad;
    const std::int64_t b = batch->x.dim(0);
    loss_sum += loss * static_cast<double>(b);
    seen += b;
    const std::int64_t k = logits.dim(1);
    for (std::int64_t i = 0; i < b; ++i) {
      int pred = 0;
      for (std::int64_t j = 1; j < k; ++j)
        if (logits[i * k + j] > logits[i * k + pred]) pred = static_cast<int>(j);
      const int actual = batch->labels[static_cast<std::size_t>(i)];
      if (pred == actual) ++correct;
      if (binary) confusion_update(result.confusion, pred, actual, 1);
    }
  }
  result.loss = loss_sum / static_cast<double>(seen);
  result.accuracy_pct =
      binary ? accuracy(result.confusion)
             : 100.0 * static_cast<double>(correct) / static_cast<double>(seen);
  return result;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

/// Owns one training run: model, optimizer state, data order. run_epoch()
/// advances one pass over the training set (or the remaining step budget,
/// for fine-tuning) so callers can interleave their own checks; pretrain()
/// and finetune() below drive it to completion.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)), data_rng_(derive_seed(cfg_.seed, kDataStream)) {
    cfg_.validate();
    train_ = load_dataset_dir(cfg_.train_dir, Split::kTrain);
    val_ = load_dataset_dir(cfg_.val_dir, Split::kValidation);
    if (train_.class_names != val_.class_names)
      throw DatasetError("trainer: train/val class names disagree");

    profile_.num_examples = static_cast<std::int64_t>(train_.items.size());
    profile_.shorter_side = static_cast<int>(
        std::min(train_.items[0].pixels.dim(1), train_.items[0].pixels.dim(2)));
    profile_.num_classes = train_.num_classes();

    if (cfg_.mode == TrainMode::kPretrain) {
      cfg_.schedule.validate();
      ResNetConfig mc = cfg_.model;
      mc.num_classes = train_.num_classes();
      model_ = build_model(mc, derive_seed(cfg_.seed, kInitStream));
      total_epochs_ = cfg_.schedule.total_epochs;
      const HyperRuleDecision res = decide(profile_);
      resize_to_ = res.train_resize;
      crop_to_ = res.train_crop;
      test_resolution_ = res.test_resolution;
      mixup_enabled_ = false;
      mixup_alpha_ = 0.0;
    } else {
      Checkpoint ckpt = checkpoint_load(cfg_.checkpoint_in);
      model_ = model_from_checkpoint(ckpt);
      model_.replace_head(train_.num_classes());
      decision_ = (!cfg_.hyperrule_auto && cfg_.decision)
                      ? *cfg_.decision
                      : decide(profile_);
      resize_to_ = decision_.train_resize;
      crop_to_ = decision_.train_crop;
      test_resolution_ = decision_.test_resolution;
      mixup_enabled_ = decision_.mixup_enabled;
      mixup_alpha_ = decision_.mixup_alpha;
      steps_budget_ = decision_.schedule_steps;
      milestone_steps_ = decision_.milestone_steps();
      const std::size_t steps_per_epoch =
          (train_.items.size() + cfg_.batch_size - 1) / cfg_.batch_size;
      total_epochs_ = static_cast<int>(
          (static_cast<std::size_t>(steps_budget_) + steps_per_epoch - 1) /
          steps_per_epoch);
    }
    if (cfg_.resolution_override > 0) {
      // Keep the rule's 5:4 resize:crop ratio around the requested crop.
      crop_to_ = cfg_.resolution_override;
      resize_to_ = cfg_.resolution_override * 5 / 4;
      test_resolution_ = cfg_.resolution_override;
    }

    auto params = model_.parameters();
    opt_state_ = SgdMomentumState::init(params);
  }

  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const HyperRuleDecision& decision() const { return decision_; }
  int total_epochs() const { return total_epochs_; }
  int epoch() const { return epoch_; }
  std::int64_t step() const { return opt_state_.step_count; }
  const std::vector<EpochMetrics>& history() const { return history_; }

  bool done() const {
    if (cfg_.mode == TrainMode::kFinetune)
      return opt_state_.step_count >= steps_budget_;
    return epoch_ >= total_epochs_;
  }

  EpochMetrics run_epoch() {
    if (done()) throw RangeError("run_epoch: schedule already exhausted");
    const auto t0 = std::chrono::steady_clock::now();

    AugmentSpec spec;
    spec.resize_to = resize_to_;
    spec.crop_to = crop_to_;
    spec.enabled = true;

    auto params = model_.parameters();
    const int num_classes = model_.config.num_classes;
    double loss_sum = 0.0;
    std::int64_t seen = 0, correct = 0;
    const double epoch_lr = current_lr();

    BatchIterator batches(train_, cfg_.batch_size, data_rng_, spec);
    while (auto batch = batches.next()) {
      if (cfg_.mode == TrainMode::kFinetune &&
          opt_state_.step_count >= steps_budget_)
        break;
      const std::int64_t b = batch->x.dim(0);

      double loss = 0.0;
      Tensor grad_logits;
      ModelCache cache;
      Tensor logits;
      if (mixup_enabled_) {
        const Tensor onehot = one_hot(batch->labels, num_classes);
        MixupResult mixed = mixup_batch(batch->x, onehot, mixup_alpha_, data_rng_);
        logits = model_.forward(mixed.x, &cache);
        std::tie(loss, grad_logits) = softmax_cross_entropy_soft(mixed.y, logits);
      } else {
        logits = model_.forward(batch->x, &cache);
        std::tie(loss, grad_logits) = softmax_cross_entropy(batch->labels, logits);
      }
      if (!std::isfinite(loss))
        throw NumericError("training: non-finite loss at step " +
                           std::to_string(opt_state_.step_count) + " (epoch " +
                           std::to_string(epoch_) + ")");

      // Train accuracy is measured against the original labels even under
      // MixUp; the inputs are mixed but the tally stays interpretable.
      const std::int64_t k = logits.dim(1);
      for (std::int64_t i = 0; i < b; ++i) {
        int pred = 0;
        for (std::int64_t j = 1; j < k; ++j)
          if (logits[i * k + j] > logits[i * k + pred])
            pred = static_cast<int>(j);
        if (pred == batch->labels[static_cast<std::size_t>(i)]) ++correct;
      }

      GradMap grads = model_.backward(cache, grad_logits);
      sgd_step(params, grads, opt_state_, current_lr(), momentum(),
               weight_decay());
      loss_sum += loss * static_cast<double>(b);
      seen += b;
    }

    EpochMetrics row;
    row.epoch = epoch_;
    row.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    row.train_acc = seen ? 100.0 * static_cast<double>(correct) /
                               static_cast<double>(seen)
                         : 0.0;
    row.lr = epoch_lr;

    const bool eval_now = (epoch_ % cfg_.eval_every == 0) ||
                          epoch_ + 1 >= total_epochs_ || done();
    if (eval_now) {
      const EvalResult val = evaluate(model_, val_, cfg_.batch_size,
                                      test_resolution_);
      last_val_loss_ = val.loss;
      last_val_acc_ = val.accuracy_pct;
    }
    row.val_loss = last_val_loss_;
    row.val_acc = last_val_acc_;

    if (cfg_.log_wall_time)
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
    ++epoch_;
    history_.push_back(row);
    return row;
  }

  EvalResult evaluate_validation() const {
    return evaluate(model_, val_, cfg_.batch_size, test_resolution_);
  }

  Checkpoint checkpoint() const {
    return make_checkpoint(model_, epoch_, opt_state_.step_count, data_rng_);
  }

  void write_outputs() const {
    if (!cfg_.metrics_csv.empty()) {
      std::ofstream csv(cfg_.metrics_csv, std::ios::trunc);
      if (!csv) throw IoError("trainer: cannot write " + cfg_.metrics_csv);
      csv << epoch_metrics_csv_header() << "\n";
      for (const EpochMetrics& row : history_) csv << to_csv_row(row) << "\n";
      if (!csv) throw IoError("trainer: short write to " + cfg_.metrics_csv);
    }
    if (!cfg_.checkpoint_out.empty())
      checkpoint_save(cfg_.checkpoint_out, checkpoint());
  }

  int test_resolution() const { return test_resolution_; }

 private:
  static constexpr std::uint64_t kInitStream = 0;
  static constexpr std::uint64_t kDataStream = 1;

  double current_lr() const {
    if (cfg_.mode == TrainMode::kPretrain) return lr_at(cfg_.schedule, epoch_);
    int k = 0;
    for (int m : milestone_steps_)
      if (m <= opt_state_.step_count) ++k;
    return decision_.base_lr * std::pow(10.0, static_cast<double>(-k));
  }

  double momentum() const {
    return cfg_.mode == TrainMode::kPretrain ? cfg_.schedule.momentum
                                             : decision_.momentum;
  }

  double weight_decay() const {
    // No weight decay during transfer; upstream may configure one.
    return cfg_.mode == TrainMode::kPretrain ? cfg_.schedule.weight_decay : 0.0;
  }

  TrainConfig cfg_;
  Dataset train_, val_;
  DatasetProfile profile_;
  Model model_;
  HyperRuleDecision decision_;
  Prng data_rng_;
  SgdMomentumState opt_state_;
  std::vector<EpochMetrics> history_;
  int epoch_ = 0;
  int total_epochs_ = 0;
  int steps_budget_ = 0;
  std::vector<int> milestone_steps_;
  int resize_to_ = 0, crop_to_ = 0, test_resolution_ = 0;
  bool mixup_enabled_ = false;
  double mixup_alpha_ = 0.0;
  double last_val_loss_ = 0.0, last_val_acc_ = 0.0;
};

/// Run the upstream recipe to completion; writes the metrics CSV and final
/// checkpoint named in the config.
inline Checkpoint pretrain(const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::kPretrain)
    throw ConfigError("pretrain: config mode is not 'pretrain'");
  Trainer trainer(cfg);
  while (!trainer.done()) trainer.run_epoch();
  trainer.write_outputs();
  return trainer.checkpoint();
}

/// Load the upstream checkpoint, swap the head for the target label set, and
/// fine-tune under the hyperrule decision (weight decay forced to zero).
inline Checkpoint finetune(const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::kFinetune)
    throw ConfigError("finetune: config mode is not 'finetune'");
  Trainer trainer(cfg);
  while (!trainer.done()) trainer.run_epoch();
  trainer.write_outputs();
  return trainer.checkpoint();
}

}  // namespace tinybit
