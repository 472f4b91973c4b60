#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tinybit/model.hpp"
#include "tinybit/tensor.hpp"

namespace tinybit {

/// The upstream optimizer recipe: SGD with momentum 0.9, base lr 0.03 scaled
/// linearly by batch_size/512, and a staircase decay by 10x at fixed epoch
/// milestones over a 50-epoch run.
struct LrSchedule {
  double base_lr = 0.03;
  double momentum = 0.9;
  std::vector<int> milestones{20, 30, 40};
  double decay_factor = 10.0;
  int total_epochs = 50;
  int batch_size = 512;
  int reference_batch = 512;
  double weight_decay = 0.0;

  void validate() const {
    if (base_lr <= 0.0) throw ConfigError("schedule: base_lr must be > 0");
    if (decay_factor <= 1.0) throw ConfigError("schedule: decay_factor must be > 1");
    if (total_epochs < 1) throw ConfigError("schedule: total_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
      if (i > 0 && milestones[i] <= milestones[i - 1])
        throw ConfigError("schedule: milestones must be strictly increasing");
      if (milestones[i] >= total_epochs)
        throw ConfigError("schedule: milestones must precede total_epochs");
    }
  }
};

/// Learning rate at a 0-indexed epoch. A milestone at epoch m applies from
/// epoch m onward. Evaluated as base * (batch/reference) * decay^-k, which
/// keeps the decimal milestones (0.003, 0.0003, ...) exact in doubles.
inline double lr_at(const LrSchedule& schedule, int epoch) {
  schedule.validate();
  if (epoch < 0 || epoch >= schedule.total_epochs)
    throw RangeError("lr_at: epoch " + std::to_string(epoch) +
                     " outside [0," + std::to_string(schedule.total_epochs) + ")");
  int k = 0;
  for (int m : schedule.milestones)
    if (m <= epoch) ++k;
  const double batch_scale = static_cast<double>(schedule.batch_size) /
                             static_cast<double>(schedule.reference_batch);
  return schedule.base_lr * batch_scale *
         std::pow(schedule.decay_factor, static_cast<double>(-k));
}

/// Velocity buffers keyed like the parameter registry.
struct SgdMomentumState {
  std::vector<std::string> names;
  std::vector<Tensor> velocity;
  std::int64_t step_count = 0;

  static SgdMomentumState init(const std::vector<ParamRef>& params) {
    SgdMomentumState state;
    for (const auto& p : params) {
      state.names.push_back(p.name);
      state.velocity.push_back(Tensor::zeros(p.tensor->shape()));
    }
    return state;
  }
};

/// Classical momentum update:
///   v <- momentum * v + g + weight_decay * p
///   p <- p - lr * v
/// Aborts before mutating anything if any gradient is non-finite.
inline void sgd_step(std::vector<ParamRef>& params, const GradMap& grads,
                     SgdMomentumState& state, double lr, double momentum,
                     double weight_decay) {
  if (params.size() != grads.names.size() || params.size() != state.names.size())
    throw RegistryError("sgd_step: registry sizes differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != grads.names[i] || params[i].name != state.names[i])
      throw RegistryError("sgd_step: registry key mismatch at '" +
                          params[i].name + "'");
    if (!params[i].tensor->same_shape(grads.grads[i]))
      throw ShapeError("sgd_step: gradient shape mismatch for '" +
                       params[i].name + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!all_finite(grads.grads[i]))
      throw NumericError("sgd_step: non-finite gradient for '" +
                         params[i].name + "' at step " +
                         std::to_string(state.step_count));

  const float m = static_cast<float>(momentum);
  const float wd = static_cast<float>(weight_decay);
  const float step = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    Tensor& v = state.velocity[i];
    const Tensor& g = grads.grads[i];
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      v[j] = m * v[j] + g[j] + wd * p[j];
      p[j] -= step * v[j];
    }
  }
  ++state.step_count;
}

}  // namespace tinybit
