#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "tinybit/common.hpp"

namespace tinybit {

/// What the fine-tuning heuristic needs to know about a dataset.
struct DatasetProfile {
  std::int64_t num_examples = 0;
  int shorter_side = 0;  // pixels
  int num_classes = 0;

  void validate() const {
    if (num_examples < 1 || shorter_side < 1 || num_classes < 1)
      throw ConfigError("dataset profile fields must all be positive");
  }
};

/// Every constant the rule uses, in one place so tests can pin them.
struct HyperRuleConstants {
  std::int64_t small_threshold = 20000;   // below: small regime
  std::int64_t large_threshold = 500000;  // above: large regime
  int small_steps = 500;
  int medium_steps = 10000;
  int large_steps = 20000;
  double mixup_alpha = 0.1;
  double base_lr = 0.003;
  double momentum = 0.9;
  std::vector<double> milestone_fractions{0.3, 0.6, 0.9};
  // Resolution rule: sides <= small_side_cutoff snap up in 32-pixel units,
  // larger images use the fixed 256/224 pair.
  int small_side_cutoff = 96;
  int resize_unit = 40;
  int crop_unit = 32;
  int max_small_resize = 160;
  int max_small_crop = 128;
  int big_resize = 256;
  int big_crop = 224;
};

/// Fine-tuning hyperparameters chosen per dataset: resolution, schedule
/// length, decay milestones, and whether to apply MixUp.
struct HyperRuleDecision {
  int train_resize = 0;
  int train_crop = 0;
  int test_resolution = 0;
  int schedule_steps = 0;
  std::vector<double> lr_milestone_fractions;
  bool mixup_enabled = false;
  double mixup_alpha = 0.0;
  double base_lr = 0.0;
  double momentum = 0.0;

  /// Absolute step indices of the decay milestones.
  std::vector<int> milestone_steps() const {
    std::vector<int> out;
    for (double f : lr_milestone_fractions)
      out.push_back(static_cast<int>(f * schedule_steps));
    return out;
  }
};

/// Deterministic table lookup mapping (dataset size, image resolution) to the
/// fine-tuning recipe. Small datasets get a short schedule and no MixUp;
/// medium and large datasets get long schedules with MixUp on.
inline HyperRuleDecision decide(const DatasetProfile& profile,
                                const HyperRuleConstants& c = {}) {
  profile.validate();
  HyperRuleDecision d;
  if (profile.num_examples < c.small_threshold) {
    d.schedule_steps = c.small_steps;
    d.mixup_enabled = false;
  } else if (profile.num_examples <= c.large_threshold) {
    d.schedule_steps = c.medium_steps;
    d.mixup_enabled = true;
  } else {
    d.schedule_steps = c.large_steps;
    d.mixup_enabled = true;
  }
  d.mixup_alpha = d.mixup_enabled ? c.mixup_alpha : 0.0;

  if (profile.shorter_side <= c.small_side_cutoff) {
    const int units = (profile.shorter_side + c.crop_unit - 1) / c.crop_unit;
    d.train_resize = std::min(c.resize_unit * units, c.max_small_resize);
    d.train_crop = std::min(c.crop_unit * units, c.max_small_crop);
  } else {
    d.train_resize = c.big_resize;
    d.train_crop = c.big_crop;
  }
  d.test_resolution = d.train_crop;

  d.lr_milestone_fractions = c.milestone_fractions;
  d.base_lr = c.base_lr;
  d.momentum = c.momentum;
  return d;
}

}  // namespace tinybit
