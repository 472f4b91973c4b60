#pragma once

// JSON (de)serialization for the config records the CLI and checkpoints
// trade in. Kept out of the core headers so only the surfaces that need
// nlohmann/json pay for it.

#include <string>

#include <json.hpp>

#include "tinybit/hyperrule.hpp"
#include "tinybit/model.hpp"
#include "tinybit/optim.hpp"

namespace tinybit {

inline void to_json(nlohmann::json& j, const ResNetConfig& c) {
  j = nlohmann::json{
      {"stage_blocks", c.stage_blocks},
      {"width_factor", c.width_factor},
      {"num_classes", c.num_classes},
      {"in_channels", c.in_channels},
      {"base_width", c.base_width},
      {"root", c.root == RootStyle::kConv7x7Pool ? "7x7-pool" : "3x3"},
      {"gn_eps", c.gn_eps},
      {"ws_eps", c.ws_eps},
      {"max_gn_groups", c.max_gn_groups},
  };
}

inline void from_json(const nlohmann::json& j, ResNetConfig& c) {
  c = ResNetConfig{};
  if (j.contains("stage_blocks")) j.at("stage_blocks").get_to(c.stage_blocks);
  if (j.contains("width_factor")) j.at("width_factor").get_to(c.width_factor);
  if (j.contains("num_classes")) j.at("num_classes").get_to(c.num_classes);
  if (j.contains("in_channels")) j.at("in_channels").get_to(c.in_channels);
  if (j.contains("base_width")) j.at("base_width").get_to(c.base_width);
  if (j.contains("root")) {
    const std::string root = j.at("root").get<std::string>();
    if (root == "7x7-pool")
      c.root = RootStyle::kConv7x7Pool;
    else if (root == "3x3")
      c.root = RootStyle::kConv3x3;
    else
      throw ConfigError("model.root must be '7x7-pool' or '3x3', got '" + root +
                        "'");
  }
  if (j.contains("gn_eps")) j.at("gn_eps").get_to(c.gn_eps);
  if (j.contains("ws_eps")) j.at("ws_eps").get_to(c.ws_eps);
  if (j.contains("max_gn_groups")) j.at("max_gn_groups").get_to(c.max_gn_groups);
}

inline void to_json(nlohmann::json& j, const LrSchedule& s) {
  j = nlohmann::json{
      {"base_lr", s.base_lr},
      {"momentum", s.momentum},
      {"milestones", s.milestones},
      {"decay_factor", s.decay_factor},
      {"total_epochs", s.total_epochs},
      {"batch_size", s.batch_size},
      {"reference_batch", s.reference_batch},
      {"weight_decay", s.weight_decay},
  };
}

inline void from_json(const nlohmann::json& j, LrSchedule& s) {
  s = LrSchedule{};
  if (j.contains("base_lr")) j.at("base_lr").get_to(s.base_lr);
  if (j.contains("momentum")) j.at("momentum").get_to(s.momentum);
  if (j.contains("milestones")) j.at("milestones").get_to(s.milestones);
  if (j.contains("decay_factor")) j.at("decay_factor").get_to(s.decay_factor);
  if (j.contains("total_epochs")) j.at("total_epochs").get_to(s.total_epochs);
  if (j.contains("batch_size")) j.at("batch_size").get_to(s.batch_size);
  if (j.contains("reference_batch")) j.at("reference_batch").get_to(s.reference_batch);
  if (j.contains("weight_decay")) j.at("weight_decay").get_to(s.weight_decay);
}

/// The exact key set the hyperrule CLI subcommand prints.
inline nlohmann::json hyperrule_decision_json(const HyperRuleDecision& d) {
  return nlohmann::json{
      {"resize", d.train_resize},
      {"crop", d.train_crop},
      {"test_resolution", d.test_resolution},
      {"steps", d.schedule_steps},
      {"milestones", d.lr_milestone_fractions},
      {"mixup", d.mixup_enabled},
      {"mixup_alpha", d.mixup_alpha},
      {"base_lr", d.base_lr},
      {"momentum", d.momentum},
  };
}

inline HyperRuleDecision hyperrule_decision_from_json(const nlohmann::json& j) {
  HyperRuleDecision d;
  j.at("resize").get_to(d.train_resize);
  j.at("crop").get_to(d.train_crop);
  j.at("test_resolution").get_to(d.test_resolution);
  j.at("steps").get_to(d.schedule_steps);
  j.at("milestones").get_to(d.lr_milestone_fractions);
  j.at("mixup").get_to(d.mixup_enabled);
  j.at("mixup_alpha").get_to(d.mixup_alpha);
  j.at("base_lr").get_to(d.base_lr);
  j.at("momentum").get_to(d.momentum);
  return d;
}

}  // namespace tinybit
