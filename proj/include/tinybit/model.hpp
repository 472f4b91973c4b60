#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tinybit/layers.hpp"
#include "tinybit/prng.hpp"
#include "tinybit/tensor.hpp"

namespace tinybit {

/// Stem of the network. The deep variant (7x7 stride-2 conv + 3x3 stride-2
/// max-pool) matches the full-scale architecture; the compact variant (3x3
/// stride-1 conv, no pool) keeps 32x32 inputs trainable.
enum class RootStyle { kConv7x7Pool, kConv3x3 };

struct ResNetConfig {
  std::array<int, 4> stage_blocks{3, 4, 6, 3};
  int width_factor = 1;
  int num_classes = 2;
  int in_channels = 3;
  int base_width = 64;
  RootStyle root = RootStyle::kConv7x7Pool;
  float gn_eps = 1e-5f;
  float ws_eps = 1e-10f;
  int max_gn_groups = 32;
};

inline ResNetConfig resnet14(int num_classes, int width_factor = 1) {
  ResNetConfig cfg;
  cfg.stage_blocks = {1, 1, 1, 1};
  cfg.width_factor = width_factor;
  cfg.num_classes = num_classes;
  cfg.root = RootStyle::kConv3x3;
  return cfg;
}

inline ResNetConfig resnet50(int num_classes, int width_factor = 1) {
  ResNetConfig cfg;
  cfg.stage_blocks = {3, 4, 6, 3};
  cfg.width_factor = width_factor;
  cfg.num_classes = num_classes;
  return cfg;
}

inline ResNetConfig resnet152(int num_classes, int width_factor = 1) {
  ResNetConfig cfg;
  cfg.stage_blocks = {3, 8, 36, 3};
  cfg.width_factor = width_factor;
  cfg.num_classes = num_classes;
  return cfg;
}

inline int gn_groups_for(std::int64_t channels, int cap) {
  const int g = static_cast<int>(std::min<std::int64_t>(cap, channels));
  if (channels % g != 0)
    throw ConfigError("channel count " + std::to_string(channels) +
                      " is not divisible by the group-norm group count " +
                      std::to_string(g));
  return g;
}

/// Pre-activation bottleneck: three GN->ReLU->conv units (1x1, 3x3, 1x1) plus
/// an identity or 1x1-projection shortcut taken from the first pre-activation.
struct Bottleneck {
  GroupNorm gn1, gn2, gn3;
  Conv2d conv1, conv2, conv3;
  Conv2d proj;  // empty weight => identity shortcut
  int stride = 1;

  bool has_projection() const { return !proj.weight.empty(); }
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

/// Gradients aligned index-for-index with Model::parameters().
struct GradMap {
  std::vector<std::string> names;
  std::vector<Tensor> grads;
};

struct BlockCache {
  Tensor x_in;
  GroupNormCache gn1_cache;
  Tensor gn1_out, preact1;
  Tensor conv1_out;
  GroupNormCache gn2_cache;
  Tensor gn2_out, preact2;
  Tensor conv2_out;
  GroupNormCache gn3_cache;
  Tensor gn3_out, preact3;
};

struct ModelCache {
  Tensor input;
  Tensor root_out;
  MaxPoolCache pool_cache;
  std::vector<std::vector<BlockCache>> blocks;
  Tensor final_in;
  GroupNormCache final_gn_cache;
  Tensor final_gn_out;
  Tensor pooled;
};

class Model {
 public:
  ResNetConfig config;
  Conv2d root_conv;
  bool root_pool = false;
  std::vector<std::vector<Bottleneck>> stages;  // 4 stages, possibly empty
  GroupNorm final_norm;
  Dense head;

  /// Stable, insertion-ordered registry of every trainable tensor. Names are
  /// the checkpoint keys.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> refs;
    visit_params([&](const std::string& name, Tensor& t) {
      refs.push_back({name, &t});
    });
    return refs;
  }

  std::vector<ConstParamRef> parameters() const {
    std::vector<ConstParamRef> refs;
    const_cast<Model*>(this)->visit_params(
        [&](const std::string& name, Tensor& t) { refs.push_back({name, &t}); });
    return refs;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.tensor->numel();
    return n;
  }

  /// Smallest H and W the stride chain supports.
  std::int64_t min_input_size() const {
    std::int64_t f = 1;
    if (root_pool) f *= 4;  // 7x7/2 conv + 3x3/2 pool
    for (std::size_t s = 1; s < stages.size(); ++s)
      if (!stages[s].empty()) f *= 2;
    return f;
  }

  Tensor forward(const Tensor& x, ModelCache* cache = nullptr) const {
    if (x.rank() != 4) throw ShapeError("model_forward: input must be [N,C,H,W]");
    if (x.dim(2) < min_input_size() || x.dim(3) < min_input_size())
      throw ShapeError("model_forward: input " + Tensor::shape_string(x.shape()) +
                       " is below the minimum spatial size " +
                       std::to_string(min_input_size()));
    if (cache) {
      cache->input = x;
      cache->blocks.assign(stages.size(), {});
    }
    Tensor cur = conv2d_forward(root_conv, x);
    if (root_pool) {
      if (cache) cache->root_out = cur;
      cur = max_pool2d(cur, 3, 2, 1, cache ? &cache->pool_cache : nullptr);
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
      for (const Bottleneck& block : stages[s]) {
        BlockCache* bc = nullptr;
        if (cache) {
          cache->blocks[s].emplace_back();
          bc = &cache->blocks[s].back();
        }
        cur = block_forward(block, cur, bc);
      }
    }
    if (cache) cache->final_in = cur;
    Tensor normed = group_norm_forward(final_norm, cur,
                                       cache ? &cache->final_gn_cache : nullptr);
    if (cache) cache->final_gn_out = normed;
    Tensor act = relu(normed);
    Tensor pooled = global_avg_pool(act);
    if (cache) cache->pooled = pooled;
    return dense_forward(head, pooled);
  }

  /// Gradients for every parameter; keys mirror parameters() exactly, in the
  /// same order. grad_input, when given, receives the gradient w.r.t. the
  /// forward input.
  GradMap backward(const ModelCache& cache, const Tensor& grad_logits,
                   Tensor* grad_input = nullptr) const {
    GradMap out;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& p : parameters()) {
      index[p.name] = out.names.size();
      out.names.push_back(p.name);
    }
    out.grads.resize(out.names.size());
    auto set = [&](const std::string& name, Tensor g) {
      out.grads[index.at(name)] = std::move(g);
    };

    DenseGrads head_grads = dense_backward(head, cache.pooled, grad_logits);
    set("head.weight", std::move(head_grads.weight));
    set("head.bias", std::move(head_grads.bias));

    Tensor g = global_avg_pool_backward(cache.final_gn_out.shape(),
                                        head_grads.input);
    g = relu_backward(cache.final_gn_out, g);
    GroupNormGrads fin = group_norm_backward(final_norm, cache.final_in,
                                             cache.final_gn_cache, g);
    set("final_norm.gamma", std::move(fin.gamma));
    set("final_norm.beta", std::move(fin.beta));
    g = std::move(fin.input);

    for (std::size_t s = stages.size(); s-- > 0;) {
      for (std::size_t b = stages[s].size(); b-- > 0;) {
        const std::string prefix =
            "stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".";
        g = block_backward(stages[s][b], cache.blocks[s][b], g, prefix, set);
      }
    }

    if (root_pool)
      g = max_pool2d_backward(cache.root_out.shape(), cache.pool_cache, g);
    Conv2dGrads root_grads = conv2d_backward(root_conv, cache.input, g);
    set("root.conv.weight", std::move(root_grads.weight));
    if (grad_input) *grad_input = std::move(root_grads.input);
    return out;
  }

  /// Swap in a freshly zero-initialized classification head; body parameters
  /// are untouched.
  void replace_head(int new_num_classes) {
    if (new_num_classes < 1)
      throw ConfigError("replace_head: class count must be >= 1");
    const std::int64_t features = head.weight.dim(1);
    head.weight = Tensor::zeros({new_num_classes, features});
    head.bias = Tensor::zeros({new_num_classes});
    config.num_classes = new_num_classes;
  }

 private:
  static Tensor block_forward(const Bottleneck& block, const Tensor& x,
                              BlockCache* cache) {
    GroupNormCache gn1_cache;
    Tensor gn1_out = group_norm_forward(block.gn1, x, &gn1_cache);
    Tensor preact1 = relu(gn1_out);
    Tensor shortcut =
        block.has_projection() ? conv2d_forward(block.proj, preact1) : x;
    Tensor h1 = conv2d_forward(block.conv1, preact1);
    GroupNormCache gn2_cache;
    Tensor gn2_out = group_norm_forward(block.gn2, h1, &gn2_cache);
    Tensor preact2 = relu(gn2_out);
    Tensor h2 = conv2d_forward(block.conv2, preact2);
    GroupNormCache gn3_cache;
    Tensor gn3_out = group_norm_forward(block.gn3, h2, &gn3_cache);
    Tensor preact3 = relu(gn3_out);
    Tensor h3 = conv2d_forward(block.conv3, preact3);
    Tensor y = add(shortcut, h3);
    if (cache) {
      cache->x_in = x;
      cache->gn1_cache = std::move(gn1_cache);
      cache->gn1_out = std::move(gn1_out);
      cache->preact1 = std::move(preact1);
      cache->conv1_out = std::move(h1);
      cache->gn2_cache = std::move(gn2_cache);
      cache->gn2_out = std::move(gn2_out);
      cache->preact2 = std::move(preact2);
      cache->conv2_out = std::move(h2);
      cache->gn3_cache = std::move(gn3_cache);
      cache->gn3_out = std::move(gn3_out);
      cache->preact3 = std::move(preact3);
    }
    return y;
  }

  template <typename Setter>
  static Tensor block_backward(const Bottleneck& block, const BlockCache& cache,
                               const Tensor& grad_y, const std::string& prefix,
                               Setter&& set) {
    // Residual add: gradient flows unchanged into both branches.
    Conv2dGrads c3 = conv2d_backward(block.conv3, cache.preact3, grad_y);
    set(prefix + "conv3.weight", std::move(c3.weight));
    Tensor g = relu_backward(cache.gn3_out, c3.input);
    GroupNormGrads g3 =
        group_norm_backward(block.gn3, cache.conv2_out, cache.gn3_cache, g);
    set(prefix + "gn3.gamma", std::move(g3.gamma));
    set(prefix + "gn3.beta", std::move(g3.beta));

    Conv2dGrads c2 = conv2d_backward(block.conv2, cache.preact2, g3.input);
    set(prefix + "conv2.weight", std::move(c2.weight));
    g = relu_backward(cache.gn2_out, c2.input);
    GroupNormGrads g2 =
        group_norm_backward(block.gn2, cache.conv1_out, cache.gn2_cache, g);
    set(prefix + "gn2.gamma", std::move(g2.gamma));
    set(prefix + "gn2.beta", std::move(g2.beta));

    Conv2dGrads c1 = conv2d_backward(block.conv1, cache.preact1, g2.input);
    set(prefix + "conv1.weight", std::move(c1.weight));
    Tensor g_preact1 = std::move(c1.input);

    if (block.has_projection()) {
      Conv2dGrads cp = conv2d_backward(block.proj, cache.preact1, grad_y);
      set(prefix + "proj.weight", std::move(cp.weight));
      g_preact1 = add(g_preact1, cp.input);
    }
    g = relu_backward(cache.gn1_out, g_preact1);
    GroupNormGrads g1 =
        group_norm_backward(block.gn1, cache.x_in, cache.gn1_cache, g);
    set(prefix + "gn1.gamma", std::move(g1.gamma));
    set(prefix + "gn1.beta", std::move(g1.beta));

    // Identity shortcut feeds the incoming gradient straight through.
    return block.has_projection() ? std::move(g1.input)
                                  : add(g1.input, grad_y);
  }

  template <typename Fn>
  void visit_params(Fn&& fn) {
    fn("root.conv.weight", root_conv.weight);
    for (std::size_t s = 0; s < stages.size(); ++s) {
      for (std::size_t b = 0; b < stages[s].size(); ++b) {
        const std::string prefix =
            "stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".";
        Bottleneck& blk = stages[s][b];
        fn(prefix + "gn1.gamma", blk.gn1.gamma);
        fn(prefix + "gn1.beta", blk.gn1.beta);
        fn(prefix + "conv1.weight", blk.conv1.weight);
        fn(prefix + "gn2.gamma", blk.gn2.gamma);
        fn(prefix + "gn2.beta", blk.gn2.beta);
        fn(prefix + "conv2.weight", blk.conv2.weight);
        fn(prefix + "gn3.gamma", blk.gn3.gamma);
        fn(prefix + "gn3.beta", blk.gn3.beta);
        fn(prefix + "conv3.weight", blk.conv3.weight);
        if (blk.has_projection()) fn(prefix + "proj.weight", blk.proj.weight);
      }
    }
    fn("final_norm.gamma", final_norm.gamma);
    fn("final_norm.beta", final_norm.beta);
    fn("head.weight", head.weight);
    fn("head.bias", head.bias);
  }
};

namespace detail {

inline Conv2d make_conv(std::int64_t in_ch, std::int64_t out_ch, int k,
                        int stride, int pad, const ResNetConfig& cfg, Prng& rng) {
  Conv2d conv;
  const float stddev =
      std::sqrt(2.0f / static_cast<float>(in_ch * k * k));  // He fan-in
  conv.weight = Tensor::normal({out_ch, in_ch, k, k}, 0.0f, stddev, rng);
  conv.stride_h = conv.stride_w = stride;
  conv.pad_h = conv.pad_w = pad;
  conv.standardize_weights = true;
  conv.ws_eps = cfg.ws_eps;
  return conv;
}

}  // namespace detail

/// Deterministic construction: He-normal conv weights (standardized at use),
/// unit gamma / zero beta, zero-initialized head. Identical seeds give
/// bitwise-identical parameter registries.
inline Model build_model(const ResNetConfig& cfg, std::uint64_t init_seed) {
  if (cfg.width_factor < 1) throw ConfigError("build_model: width_factor must be >= 1");
  if (cfg.base_width < 1) throw ConfigError("build_model: base_width must be >= 1");
  if (cfg.num_classes < 1) throw ConfigError("build_model: num_classes must be >= 1");
  if (cfg.in_channels < 1) throw ConfigError("build_model: in_channels must be >= 1");
  for (int b : cfg.stage_blocks)
    if (b < 0) throw ConfigError("build_model: stage block counts must be >= 0");

  Prng rng(init_seed);
  Model model;
  model.config = cfg;

  const std::int64_t root_width =
      static_cast<std::int64_t>(cfg.base_width) * cfg.width_factor;
  if (cfg.root == RootStyle::kConv7x7Pool) {
    model.root_conv =
        detail::make_conv(cfg.in_channels, root_width, 7, 2, 3, cfg, rng);
    model.root_pool = true;
  } else {
    model.root_conv =
        detail::make_conv(cfg.in_channels, root_width, 3, 1, 1, cfg, rng);
    model.root_pool = false;
  }

  model.stages.resize(4);
  std::int64_t cur = root_width;
  for (int s = 0; s < 4; ++s) {
    const std::int64_t mid =
        static_cast<std::int64_t>(cfg.base_width) * (1LL << s) * cfg.width_factor;
    const std::int64_t out = mid * 4;  // bottleneck expansion
    for (int b = 0; b < cfg.stage_blocks[static_cast<std::size_t>(s)]; ++b) {
      Bottleneck blk;
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      blk.stride = stride;
      blk.gn1 = make_group_norm(cur, gn_groups_for(cur, cfg.max_gn_groups),
                                cfg.gn_eps);
      blk.conv1 = detail::make_conv(cur, mid, 1, 1, 0, cfg, rng);
      blk.gn2 = make_group_norm(mid, gn_groups_for(mid, cfg.max_gn_groups),
                                cfg.gn_eps);
      blk.conv2 = detail::make_conv(mid, mid, 3, stride, 1, cfg, rng);
      blk.gn3 = make_group_norm(mid, gn_groups_for(mid, cfg.max_gn_groups),
                                cfg.gn_eps);
      blk.conv3 = detail::make_conv(mid, out, 1, 1, 0, cfg, rng);
      if (b == 0 && (cur != out || stride != 1))
        blk.proj = detail::make_conv(cur, out, 1, stride, 0, cfg, rng);
      model.stages[static_cast<std::size_t>(s)].push_back(std::move(blk));
      cur = out;
    }
  }

  model.final_norm =
      make_group_norm(cur, gn_groups_for(cur, cfg.max_gn_groups), cfg.gn_eps);
  model.head.weight = Tensor::zeros({cfg.num_classes, cur});
  model.head.bias = Tensor::zeros({cfg.num_classes});
  return model;
}

}  // namespace tinybit
