#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tinybit/layers.hpp"
#include "tinybit/metrics.hpp"
#include "tinybit/model.hpp"
#include "tinybit/prng.hpp"
#include "tinybit/tensor.hpp"

namespace tinybit {

// ---------------------------------------------------------------------------
// Generic central-difference oracle
// ---------------------------------------------------------------------------

/// Central finite differences of a scalar function of one tensor:
/// g[i] = (f(x + eps*e_i) - f(x - eps*e_i)) / h. The perturbed values live on
/// the tensor's own f32 grid, so h is the realized step (x+) - (x-) rather
/// than 2*eps; f must be pure and deterministic.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                               Tensor x, float eps) {
  if (eps <= 0.0f) throw RangeError("finite_diff_grad: eps must be > 0");
  Tensor g(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const float saved = x[i];
    x[i] = saved + eps;
    const double hi = x[i];
    const double fp = f(x);
    x[i] = saved - eps;
    const double lo = x[i];
    const double fm = f(x);
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite function value");
    g[i] = static_cast<float>((fp - fm) / (hi - lo));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Independent double-precision forward implementations
//
// These are the oracle side of every layer check: naive loops, written
// against the layer contracts rather than the library code, evaluated
// entirely in float64. They share no code with the analytic backward passes
// they judge.
// ---------------------------------------------------------------------------

namespace oracle {

struct DTensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  static DTensor from(const Tensor& t) {
    DTensor d;
    d.shape = t.shape();
    d.data.assign(t.data(), t.data() + t.numel());
    return d;
  }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

inline DTensor weight_standardize(const DTensor& w, double eps) {
  const std::int64_t o = w.dim(0), fan = w.numel() / w.dim(0);
  DTensor out = w;
  for (std::int64_t c = 0; c < o; ++c) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < fan; ++i) mean += w[c * fan + i];
    mean /= static_cast<double>(fan);
    double var = 0.0;
    for (std::int64_t i = 0; i < fan; ++i) {
      const double d = w[c * fan + i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(fan);
    const double denom = std::sqrt(var + eps);
    for (std::int64_t i = 0; i < fan; ++i)
      out[c * fan + i] = (w[c * fan + i] - mean) / denom;
  }
  return out;
}

inline DTensor conv2d(const DTensor& x, const DTensor& w_raw, const DTensor& bias,
                      int stride, int pad, bool standardize, double ws_eps) {
  const std::int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const std::int64_t co = w_raw.dim(0), kh = w_raw.dim(2), kw = w_raw.dim(3);
  const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t wo = (ww + 2 * pad - kw) / stride + 1;
  const DTensor w = standardize ? weight_standardize(w_raw, ws_eps) : w_raw;
  DTensor out;
  out.shape = {n, co, ho, wo};
  out.data.assign(static_cast<std::size_t>(n * co * ho * wo), 0.0);
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t o = 0; o < co; ++o)
      for (std::int64_t oh = 0; oh < ho; ++oh)
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          double acc = bias.data.empty() ? 0.0 : bias[o];
          for (std::int64_t c = 0; c < ci; ++c)
            for (std::int64_t i = 0; i < kh; ++i)
              for (std::int64_t j = 0; j < kw; ++j) {
                const std::int64_t ih = oh * stride - pad + i;
                const std::int64_t iw = ow * stride - pad + j;
                if (ih < 0 || ih >= h || iw < 0 || iw >= ww) continue;
                acc += x[((b * ci + c) * h + ih) * ww + iw] *
                       w[((o * ci + c) * kh + i) * kw + j];
              }
          out[((b * co + o) * ho + oh) * wo + ow] = acc;
        }
  return out;
}

inline DTensor group_norm(const DTensor& x, int groups, const DTensor& gamma,
                          const DTensor& beta, double eps) {
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::int64_t gsz = c / groups, m = gsz * hw;
  DTensor out = x;
  for (std::int64_t b = 0; b < n; ++b)
    for (int g = 0; g < groups; ++g) {
      double mean = 0.0;
      for (std::int64_t ci = 0; ci < gsz; ++ci) {
        const std::int64_t ch = g * gsz + ci;
        for (std::int64_t j = 0; j < hw; ++j)
          mean += x[(b * c + ch) * hw + j];
      }
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::int64_t ci = 0; ci < gsz; ++ci) {
        const std::int64_t ch = g * gsz + ci;
        for (std::int64_t j = 0; j < hw; ++j) {
          const double d = x[(b * c + ch) * hw + j] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::int64_t ci = 0; ci < gsz; ++ci) {
        const std::int64_t ch = g * gsz + ci;
        for (std::int64_t j = 0; j < hw; ++j)
          out[(b * c + ch) * hw + j] =
              gamma[ch] * (x[(b * c + ch) * hw + j] - mean) * inv + beta[ch];
      }
    }
  return out;
}

inline DTensor relu(const DTensor& x) {
  DTensor out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

inline DTensor max_pool(const DTensor& x, int k, int stride, int pad) {
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (w + 2 * pad - k) / stride + 1;
  DTensor out;
  out.shape = {n, c, ho, wo};
  out.data.assign(static_cast<std::size_t>(n * c * ho * wo), 0.0);
  std::int64_t oi = 0;
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t oh = 0; oh < ho; ++oh)
        for (std::int64_t ow = 0; ow < wo; ++ow, ++oi) {
          double best = -1e300;
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const std::int64_t ih = oh * stride - pad + i;
              const std::int64_t iw = ow * stride - pad + j;
              if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
              best = std::max(best, x[((b * c + ch) * h + ih) * w + iw]);
            }
          out[oi] = best;
        }
  return out;
}

inline DTensor global_avg_pool(const DTensor& x) {
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  DTensor out;
  out.shape = {n, c};
  out.data.assign(static_cast<std::size_t>(n * c), 0.0);
  for (std::int64_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < hw; ++j) acc += x[i * hw + j];
    out[i] = acc / static_cast<double>(hw);
  }
  return out;
}

inline DTensor dense(const DTensor& x, const DTensor& w, const DTensor& b) {
  const std::int64_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
  DTensor out;
  out.shape = {n, o};
  out.data.assign(static_cast<std::size_t>(n * o), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < o; ++j) {
      double acc = b.data.empty() ? 0.0 : b[j];
      for (std::int64_t p = 0; p < f; ++p) acc += x[i * f + p] * w[j * f + p];
      out[i * o + j] = acc;
    }
  return out;
}

inline double softmax_ce(const std::vector<int>& y, const DTensor& logits) {
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double mx = logits[i * k];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, logits[i * k + j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < k; ++j) sum += std::exp(logits[i * k + j] - mx);
    loss -= logits[i * k + y[static_cast<std::size_t>(i)]] - mx - std::log(sum);
  }
  return loss / static_cast<double>(n);
}

inline double bce_logits(const std::vector<int>& y, const DTensor& logits) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = logits[static_cast<std::int64_t>(i)];
    // -log sigmoid(z) resp. -log sigmoid(-z), in stable form
    const double soft = z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    loss += y[i] ? soft : soft + z;
  }
  return loss / static_cast<double>(y.size());
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Layer checks
// ---------------------------------------------------------------------------

struct GradEntry {
  std::string tensor;
  double max_rel = 0.0;
  double max_abs = 0.0;
};

struct GradReport {
  std::string layer;
  double tolerance = 1e-3;
  double eps = 1e-3;
  std::vector<GradEntry> entries;
  bool pass = false;

  double worst_rel() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel);
    return w;
  }

  std::string to_table() const {
    char line[160];
    std::string out;
    std::snprintf(line, sizeof(line), "%-18s tol=%.1e eps=%.1e  %s\n",
                  layer.c_str(), tolerance, eps, pass ? "PASS" : "FAIL");
    out += line;
    for (const auto& e : entries) {
      std::snprintf(line, sizeof(line), "  %-20s max_rel=%12.4e  max_abs=%12.4e\n",
                    e.tensor.c_str(), e.max_rel, e.max_abs);
      out += line;
    }
    return out;
  }
};

namespace detail {

/// One check target: named f32 tensors, an analytic-gradient producer, and a
/// float64 oracle evaluation of the same scalar.
struct CheckPlan {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  // analytic() returns gradients aligned with `tensors`
  std::function<std::vector<Tensor>()> analytic;
  // eval64(tensors-as-doubles) -> scalar, independent implementation
  std::function<double(const std::vector<oracle::DTensor>&)> eval64;
};

inline GradReport run_plan(const std::string& layer, CheckPlan& plan, double tol,
                           double eps) {
  GradReport report;
  report.layer = layer;
  report.tolerance = tol;
  report.eps = eps;

  const std::vector<Tensor> analytic = plan.analytic();
  std::vector<oracle::DTensor> dt;
  dt.reserve(plan.tensors.size());
  for (const Tensor& t : plan.tensors) dt.push_back(oracle::DTensor::from(t));

  bool ok = true;
  for (std::size_t ti = 0; ti < plan.tensors.size(); ++ti) {
    GradEntry entry;
    entry.tensor = plan.names[ti];
    for (std::int64_t i = 0; i < plan.tensors[ti].numel(); ++i) {
      const double saved = dt[ti][i];
      dt[ti][i] = saved + eps;
      const double fp = plan.eval64(dt);
      dt[ti][i] = saved - eps;
      const double fm = plan.eval64(dt);
      dt[ti][i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("gradcheck: oracle produced a non-finite value");
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[ti][i];
      const double abs_err = std::abs(a - numeric);
      const double rel =
          abs_err / std::max({std::abs(a), std::abs(numeric), 1e-6});
      entry.max_rel = std::max(entry.max_rel, rel);
      entry.max_abs = std::max(entry.max_abs, abs_err);
    }
    ok = ok && entry.max_rel <= tol;
    report.entries.push_back(std::move(entry));
  }
  report.pass = ok;
  return report;
}

/// Projection coefficients that turn a tensor-valued output into a scalar.
inline Tensor projection(const std::vector<std::int64_t>& shape, Prng& rng) {
  Tensor c(shape);
  for (std::int64_t i = 0; i < c.numel(); ++i) c[i] = rng.uniform(-1.0f, 1.0f);
  return c;
}

inline double project64(const oracle::DTensor& out, const Tensor& c) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < out.numel(); ++i) acc += out[i] * c[i];
  return acc;
}

/// Values with guaranteed pairwise separation, for pooling argmax stability.
inline Tensor well_separated(const std::vector<std::int64_t>& shape, Prng& rng) {
  Tensor t(shape);
  std::vector<int> ranks(static_cast<std::size_t>(t.numel()));
  for (std::size_t i = 0; i < ranks.size(); ++i) ranks[i] = static_cast<int>(i);
  rng.shuffle(ranks);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = 0.1f * ranks[static_cast<std::size_t>(i)] +
           rng.uniform(-0.02f, 0.02f);
  return t;
}

/// Double-precision re-evaluation of a whole model from a flat tensor list
/// (t[0] = input, then Model::parameters() order). Only the structure comes
/// from `net`; all values come from `t`.
inline double oracle_model_eval(const Model& net,
                                const std::vector<oracle::DTensor>& t,
                                const Tensor& c) {
  std::size_t idx = 1;
  auto next = [&]() -> const oracle::DTensor& { return t[idx++]; };
  const oracle::DTensor none;

  oracle::DTensor cur;
  {
    const Conv2d& rc = net.root_conv;
    const oracle::DTensor& w = next();
    cur = oracle::conv2d(t[0], w, none, rc.stride_h, rc.pad_h,
                         rc.standardize_weights, rc.ws_eps);
    if (net.root_pool) cur = oracle::max_pool(cur, 3, 2, 1);
  }
  for (const auto& stage : net.stages) {
    for (const Bottleneck& b : stage) {
      const oracle::DTensor& g1g = next();
      const oracle::DTensor& g1b = next();
      const oracle::DTensor& w1 = next();
      const oracle::DTensor& g2g = next();
      const oracle::DTensor& g2b = next();
      const oracle::DTensor& w2 = next();
      const oracle::DTensor& g3g = next();
      const oracle::DTensor& g3b = next();
      const oracle::DTensor& w3 = next();
      const oracle::DTensor* wp = nullptr;
      if (b.has_projection()) wp = &next();

      oracle::DTensor preact1 = oracle::relu(
          oracle::group_norm(cur, b.gn1.num_groups, g1g, g1b, b.gn1.eps));
      oracle::DTensor shortcut =
          wp ? oracle::conv2d(preact1, *wp, none, b.proj.stride_h, b.proj.pad_h,
                              b.proj.standardize_weights, b.proj.ws_eps)
             : cur;
      oracle::DTensor h = oracle::conv2d(preact1, w1, none, b.conv1.stride_h,
                                         b.conv1.pad_h,
                                         b.conv1.standardize_weights,
                                         b.conv1.ws_eps);
      h = oracle::relu(oracle::group_norm(h, b.gn2.num_groups, g2g, g2b, b.gn2.eps));
      h = oracle::conv2d(h, w2, none, b.conv2.stride_h, b.conv2.pad_h,
                         b.conv2.standardize_weights, b.conv2.ws_eps);
      h = oracle::relu(oracle::group_norm(h, b.gn3.num_groups, g3g, g3b, b.gn3.eps));
      h = oracle::conv2d(h, w3, none, b.conv3.stride_h, b.conv3.pad_h,
                         b.conv3.standardize_weights, b.conv3.ws_eps);
      for (std::int64_t i = 0; i < h.numel(); ++i) h[i] += shortcut[i];
      cur = std::move(h);
    }
  }
  const oracle::DTensor& fg = next();
  const oracle::DTensor& fb = next();
  cur = oracle::relu(oracle::group_norm(cur, net.final_norm.num_groups, fg, fb,
                                        net.final_norm.eps));
  cur = oracle::global_avg_pool(cur);
  const oracle::DTensor& hw = next();
  const oracle::DTensor& hb = next();
  cur = oracle::dense(cur, hw, hb);
  return project64(cur, c);
}

inline GradReport run_model_check(const std::string& label, Model& net,
                                  std::vector<std::int64_t> in_shape,
                                  std::uint64_t seed, double tol, double eps) {
  Prng rng(derive_seed(seed, 0xF00D));
  Tensor x(in_shape);
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1.0f, 1.0f);
  ModelCache cache;
  Tensor out = net.forward(x, &cache);
  Tensor c = projection(out.shape(), rng);

  CheckPlan plan;
  plan.names = {"input"};
  plan.tensors = {x};
  for (const auto& p : net.parameters()) {
    plan.names.push_back(p.name);
    plan.tensors.push_back(*p.tensor);
  }
  plan.analytic = [&net, &cache, &c]() {
    Tensor grad_input;
    GradMap grads = net.backward(cache, c, &grad_input);
    std::vector<Tensor> out;
    out.push_back(std::move(grad_input));
    for (Tensor& g : grads.grads) out.push_back(std::move(g));
    return out;
  };
  plan.eval64 = [&net, &c](const std::vector<oracle::DTensor>& t) {
    return oracle_model_eval(net, t, c);
  };
  return run_plan(label, plan, tol, eps);
}

}  // namespace detail

/// Names accepted by check_layer / the gradcheck CLI.
inline std::vector<std::string> checkable_layers() {
  return {"conv",  "conv_ws", "gn",    "relu",  "maxpool",         "gap",
          "dense", "block",   "model", "softmax_ce", "bce", "negative_control"};
}

/// Composite cases step with a smaller eps: their loss surfaces cross ReLU
/// kinks inside the default 1e-3 step often enough to poison the difference
/// quotient, and the float64 oracle keeps roundoff negligible at 1e-5.
inline double default_eps(const std::string& layer) {
  return (layer == "block" || layer == "model") ? 1e-5 : 1e-3;
}

/// Tolerance the acceptance gate applies per layer.
inline double default_tolerance(const std::string& layer) {
  return layer == "model" ? 1e-2 : 1e-3;
}

/// Compare a layer's analytic backward against the independent float64
/// finite-difference oracle, over its input and every parameter.
/// negative_control is the mandated broken fixture: its backward flips sign,
/// and the suite must report it as a failure.
inline GradReport check_layer(const std::string& name, std::uint64_t seed,
                              double tol, double eps) {
  Prng rng(derive_seed(seed, 0x6A5D));
  detail::CheckPlan plan;

  auto uni = [&rng](std::vector<std::int64_t> shape, float lo, float hi) {
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
  };

  if (name == "conv" || name == "conv_ws") {
    const bool ws = name == "conv_ws";
    Conv2d layer;
    if (ws) {
      layer.weight = uni({3, 2, 3, 3}, -1.0f, 1.0f);
      layer.stride_h = layer.stride_w = 1;
      layer.pad_h = layer.pad_w = 0;
      layer.standardize_weights = true;
    } else {
      layer.weight = uni({3, 2, 3, 3}, -1.0f, 1.0f);
      layer.bias = uni({3}, -0.5f, 0.5f);
      layer.stride_h = layer.stride_w = 2;
      layer.pad_h = layer.pad_w = 1;
    }
    Tensor x = uni({1, 2, ws ? 5 : 6, ws ? 5 : 6}, -1.0f, 1.0f);
    Tensor out = conv2d_forward(layer, x);
    Tensor c = detail::projection(out.shape(), rng);

    plan.names = {"input", "weight"};
    plan.tensors = {x, layer.weight};
    if (!ws) {
      plan.names.push_back("bias");
      plan.tensors.push_back(layer.bias);
    }
    const int stride = layer.stride_h, pad = layer.pad_h;
    const float ws_eps = layer.ws_eps;
    plan.analytic = [layer, x, c]() {
      Conv2dGrads g = conv2d_backward(layer, x, c);
      std::vector<Tensor> out{g.input, g.weight};
      if (!g.bias.empty()) out.push_back(g.bias);
      return out;
    };
    plan.eval64 = [c, ws, stride, pad, ws_eps](const std::vector<oracle::DTensor>& t) {
      oracle::DTensor bias;
      if (t.size() > 2) bias = t[2];
      return detail::project64(
          oracle::conv2d(t[0], t[1], bias, stride, pad, ws, ws_eps), c);
    };
  } else if (name == "gn") {
    GroupNorm layer = make_group_norm(4, 2);
    layer.gamma = uni({4}, 0.5f, 1.5f);
    layer.beta = uni({4}, -0.5f, 0.5f);
    Tensor x = uni({2, 4, 3, 3}, -1.0f, 1.0f);
    GroupNormCache cache;
    Tensor out = group_norm_forward(layer, x, &cache);
    Tensor c = detail::projection(out.shape(), rng);

    plan.names = {"input", "gamma", "beta"};
    plan.tensors = {x, layer.gamma, layer.beta};
    const float gn_eps = layer.eps;
    plan.analytic = [layer, x, cache, c]() {
      GroupNormGrads g = group_norm_backward(layer, x, cache, c);
      return std::vector<Tensor>{g.input, g.gamma, g.beta};
    };
    plan.eval64 = [c, gn_eps](const std::vector<oracle::DTensor>& t) {
      return detail::project64(oracle::group_norm(t[0], 2, t[1], t[2], gn_eps), c);
    };
  } else if (name == "relu") {
    // Inputs bounded away from the kink at zero; eps stays well inside.
    Tensor x({2, 3, 4, 4});
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const float mag = rng.uniform(0.1f, 1.0f);
      x[i] = rng.next_float() < 0.5f ? -mag : mag;
    }
    Tensor c = detail::projection(x.shape(), rng);
    plan.names = {"input"};
    plan.tensors = {x};
    plan.analytic = [x, c]() {
      return std::vector<Tensor>{relu_backward(x, c)};
    };
    plan.eval64 = [c](const std::vector<oracle::DTensor>& t) {
      return detail::project64(oracle::relu(t[0]), c);
    };
  } else if (name == "maxpool") {
    Tensor x = detail::well_separated({1, 2, 6, 6}, rng);
    MaxPoolCache cache;
    Tensor out = max_pool2d(x, 3, 2, 1, &cache);
    Tensor c = detail::projection(out.shape(), rng);
    plan.names = {"input"};
    plan.tensors = {x};
    plan.analytic = [x, cache, c]() {
      return std::vector<Tensor>{max_pool2d_backward(x.shape(), cache, c)};
    };
    plan.eval64 = [c](const std::vector<oracle::DTensor>& t) {
      return detail::project64(oracle::max_pool(t[0], 3, 2, 1), c);
    };
  } else if (name == "gap") {
    Tensor x = uni({2, 3, 5, 5}, -1.0f, 1.0f);
    Tensor out = global_avg_pool(x);
    Tensor c = detail::projection(out.shape(), rng);
    plan.names = {"input"};
    plan.tensors = {x};
    plan.analytic = [x, c]() {
      return std::vector<Tensor>{global_avg_pool_backward(x.shape(), c)};
    };
    plan.eval64 = [c](const std::vector<oracle::DTensor>& t) {
      return detail::project64(oracle::global_avg_pool(t[0]), c);
    };
  } else if (name == "dense" || name == "negative_control") {
    Dense layer;
    layer.weight = uni({2, 4}, -1.0f, 1.0f);
    layer.bias = uni({2}, -0.5f, 0.5f);
    Tensor x = uni({3, 4}, -1.0f, 1.0f);
    Tensor out = dense_forward(layer, x);
    Tensor c = detail::projection(out.shape(), rng);
    const bool corrupt = name == "negative_control";
    plan.names = {"input", "weight", "bias"};
    plan.tensors = {x, layer.weight, layer.bias};
    plan.analytic = [layer, x, c, corrupt]() {
      DenseGrads g = dense_backward(layer, x, c);
      std::vector<Tensor> out{g.input, g.weight, g.bias};
      if (corrupt)  // deliberate sign flip: the suite must be able to fail
        for (Tensor& t : out)
          for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = -t[i];
      return out;
    };
    plan.eval64 = [c](const std::vector<oracle::DTensor>& t) {
      return detail::project64(oracle::dense(t[0], t[1], t[2]), c);
    };
  } else if (name == "block") {
    // One identity-shortcut bottleneck (in == out channels, stride 1) wrapped
    // between a root conv and a random head so the shortcut path is exercised.
    const std::int64_t ch = 8;
    Bottleneck blk;
    blk.gn1 = make_group_norm(ch, 8);
    blk.gn1.gamma = uni({ch}, 0.5f, 1.5f);
    blk.gn1.beta = uni({ch}, -0.3f, 0.3f);
    blk.conv1.weight = uni({2, ch, 1, 1}, -0.8f, 0.8f);
    blk.conv1.standardize_weights = true;
    blk.gn2 = make_group_norm(2, 2);
    blk.gn2.gamma = uni({2}, 0.5f, 1.5f);
    blk.gn2.beta = uni({2}, -0.3f, 0.3f);
    blk.conv2.weight = uni({2, 2, 3, 3}, -0.8f, 0.8f);
    blk.conv2.pad_h = blk.conv2.pad_w = 1;
    blk.conv2.standardize_weights = true;
    blk.gn3 = make_group_norm(2, 2);
    blk.gn3.gamma = uni({2}, 0.5f, 1.5f);
    blk.gn3.beta = uni({2}, -0.3f, 0.3f);
    blk.conv3.weight = uni({ch, 2, 1, 1}, -0.8f, 0.8f);
    blk.conv3.standardize_weights = true;

    Model wrap;
    wrap.config = resnet14(2);
    wrap.config.stage_blocks = {1, 0, 0, 0};
    wrap.config.base_width = 2;
    wrap.root_conv.weight = uni({ch, 3, 3, 3}, -0.5f, 0.5f);
    wrap.root_conv.pad_h = wrap.root_conv.pad_w = 1;
    wrap.root_conv.standardize_weights = true;
    wrap.stages.resize(4);
    wrap.stages[0].push_back(std::move(blk));
    wrap.final_norm = make_group_norm(ch, 8);
    wrap.head.weight = uni({2, ch}, -0.5f, 0.5f);
    wrap.head.bias = uni({2}, -0.2f, 0.2f);
    return detail::run_model_check("block", wrap, {1, 3, 6, 6}, seed, tol, eps);
  } else if (name == "model") {
    // Full small network: root conv, one projection bottleneck (stride 1,
    // channel change), final norm, head. The "full small model" case.
    ResNetConfig cfg;
    cfg.stage_blocks = {1, 0, 0, 0};
    cfg.base_width = 8;
    cfg.num_classes = 2;
    cfg.root = RootStyle::kConv3x3;
    Model net = build_model(cfg, derive_seed(seed, 0x3DE1));
    // Random head so every parameter carries gradient.
    net.head.weight = uni({2, 32}, -0.5f, 0.5f);
    net.head.bias = uni({2}, -0.2f, 0.2f);
    return detail::run_model_check("model", net, {1, 3, 8, 8}, seed, tol, eps);
  } else if (name == "softmax_ce") {
    Tensor logits = uni({4, 3}, -2.0f, 2.0f);
    std::vector<int> y;
    for (int i = 0; i < 4; ++i) y.push_back(static_cast<int>(rng.below(3)));
    plan.names = {"logits"};
    plan.tensors = {logits};
    plan.analytic = [y, logits]() {
      return std::vector<Tensor>{softmax_cross_entropy(y, logits).second};
    };
    plan.eval64 = [y](const std::vector<oracle::DTensor>& t) {
      return oracle::softmax_ce(y, t[0]);
    };
  } else if (name == "bce") {
    Tensor logits = uni({6}, -2.0f, 2.0f);
    std::vector<int> y;
    for (int i = 0; i < 6; ++i) y.push_back(static_cast<int>(rng.below(2)));
    plan.names = {"logits"};
    plan.tensors = {logits};
    plan.analytic = [y, logits]() {
      return std::vector<Tensor>{
          binary_cross_entropy_with_logits(y, logits).second};
    };
    plan.eval64 = [y](const std::vector<oracle::DTensor>& t) {
      return oracle::bce_logits(y, t[0]);
    };
  } else {
    throw UsageError("gradcheck: unknown layer '" + name + "'");
  }

  return detail::run_plan(name, plan, tol, eps);
}

inline GradReport check_layer(const std::string& name, std::uint64_t seed) {
  return check_layer(name, seed, default_tolerance(name), default_eps(name));
}

}  // namespace tinybit
