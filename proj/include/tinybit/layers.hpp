#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tinybit/tensor.hpp"

namespace tinybit {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

// ---------------------------------------------------------------------------
// Weight standardization
// ---------------------------------------------------------------------------

/// Re-parameterize a conv kernel so every output channel has zero mean and
/// unit variance over its fan-in (population moments, shared eps). A constant
/// channel standardizes to all zeros rather than erroring.
inline Tensor weight_standardize(const Tensor& w, float eps) {
  if (w.rank() != 4) throw ShapeError("weight_standardize: kernel must be rank 4");
  if (eps <= 0.0f) throw RangeError("weight_standardize: eps must be > 0");
  const std::int64_t out_ch = w.dim(0);
  const std::int64_t fan_in = w.numel() / out_ch;
  Tensor out(w.shape());
  for (std::int64_t o = 0; o < out_ch; ++o) {
    const float* src = w.data() + o * fan_in;
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t i = 0; i < fan_in; ++i) {
      sum += src[i];
      sumsq += static_cast<double>(src[i]) * src[i];
    }
    const double mean = sum / static_cast<double>(fan_in);
    const double var = std::max(sumsq / static_cast<double>(fan_in) - mean * mean, 0.0);
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
    float* dst = out.data() + o * fan_in;
    for (std::int64_t i = 0; i < fan_in; ++i)
      dst[i] = static_cast<float>((src[i] - mean) * inv_std);
  }
  return out;
}

/// Chain rule through weight_standardize: maps the gradient w.r.t. the
/// standardized kernel back to the raw kernel. Same algebra as a layer-norm
/// backward over each channel's fan-in.
inline Tensor weight_standardize_backward(const Tensor& w, float eps,
                                          const Tensor& grad_std) {
  detail::require_same_shape(w, grad_std, "weight_standardize_backward");
  const std::int64_t out_ch = w.dim(0);
  const std::int64_t fan_in = w.numel() / out_ch;
  Tensor out(w.shape());
  for (std::int64_t o = 0; o < out_ch; ++o) {
    const float* src = w.data() + o * fan_in;
    const float* g = grad_std.data() + o * fan_in;
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t i = 0; i < fan_in; ++i) {
      sum += src[i];
      sumsq += static_cast<double>(src[i]) * src[i];
    }
    const double mean = sum / static_cast<double>(fan_in);
    const double var = std::max(sumsq / static_cast<double>(fan_in) - mean * mean, 0.0);
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
    double g_mean = 0.0, g_dot = 0.0;  // mean(G), mean(G * what)
    for (std::int64_t i = 0; i < fan_in; ++i) {
      const double xhat = (src[i] - mean) * inv_std;
      g_mean += g[i];
      g_dot += g[i] * xhat;
    }
    g_mean /= static_cast<double>(fan_in);
    g_dot /= static_cast<double>(fan_in);
    float* dst = out.data() + o * fan_in;
    for (std::int64_t i = 0; i < fan_in; ++i) {
      const double xhat = (src[i] - mean) * inv_std;
      dst[i] = static_cast<float>(inv_std * (g[i] - g_mean - xhat * g_dot));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// 2-D cross-correlation over NCHW tensors with symmetric zero padding.
/// Kernel layout [out_channels, in_channels, kh, kw]; bias is optional
/// (empty tensor = absent). With standardize_weights set, the forward pass
/// convolves with weight_standardize(weight) and the backward pass chains
/// through it, so reported weight gradients are w.r.t. the raw kernel.
struct Conv2d {
  Tensor weight;
  Tensor bias;
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
  bool standardize_weights = false;
  float ws_eps = 1e-10f;

  std::int64_t out_channels() const { return weight.dim(0); }
  std::int64_t in_channels() const { return weight.dim(1); }
  Tensor effective_weight() const {
    return standardize_weights ? weight_standardize(weight, ws_eps) : weight;
  }
};

namespace detail {

inline std::int64_t conv_out_extent(std::int64_t in, int k, int stride, int pad,
                                    const char* what) {
  const std::int64_t padded = in + 2 * pad;
  if (padded < k)
    throw ShapeError(std::string("conv2d: kernel exceeds padded input along ") + what);
  return (padded - k) / stride + 1;
}

inline void im2col(const float* x, std::int64_t c_in, std::int64_t h, std::int64_t w,
                   int kh, int kw, int sh, int sw, int ph, int pw,
                   std::int64_t h_out, std::int64_t w_out, float* col) {
  for (std::int64_t c = 0; c < c_in; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        float* dst = col + ((c * kh + i) * kw + j) * (h_out * w_out);
        for (std::int64_t oh = 0; oh < h_out; ++oh) {
          const std::int64_t ih = oh * sh - ph + i;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + w_out, 0.0f);
            dst += w_out;
            continue;
          }
          const float* src = x + (c * h + ih) * w;
          for (std::int64_t ow = 0; ow < w_out; ++ow) {
            const std::int64_t iw = ow * sw - pw + j;
            *dst++ = (iw >= 0 && iw < w) ? src[iw] : 0.0f;
          }
        }
      }
    }
  }
}

inline void col2im_add(const float* col, std::int64_t c_in, std::int64_t h,
                       std::int64_t w, int kh, int kw, int sh, int sw, int ph,
                       int pw, std::int64_t h_out, std::int64_t w_out, float* x) {
  for (std::int64_t c = 0; c < c_in; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const float* src = col + ((c * kh + i) * kw + j) * (h_out * w_out);
        for (std::int64_t oh = 0; oh < h_out; ++oh) {
          const std::int64_t ih = oh * sh - ph + i;
          if (ih < 0 || ih >= h) {
            src += w_out;
            continue;
          }
          float* dst = x + (c * h + ih) * w;
          for (std::int64_t ow = 0; ow < w_out; ++ow) {
            const std::int64_t iw = ow * sw - pw + j;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
          src += w_out;
        }
      }
    }
  }
}

}  // namespace detail

inline Tensor conv2d_forward(const Conv2d& layer, const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [N,C,H,W]");
  if (x.dim(1) != layer.in_channels())
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) +
                     " channels, kernel expects " +
                     std::to_string(layer.in_channels()));
  const std::int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int kh = static_cast<int>(layer.weight.dim(2));
  const int kw = static_cast<int>(layer.weight.dim(3));
  const std::int64_t h_out =
      detail::conv_out_extent(h, kh, layer.stride_h, layer.pad_h, "height");
  const std::int64_t w_out =
      detail::conv_out_extent(w, kw, layer.stride_w, layer.pad_w, "width");
  const std::int64_t c_out = layer.out_channels();
  const std::int64_t k = c_in * kh * kw;
  const std::int64_t p = h_out * w_out;

  const Tensor w_eff = layer.effective_weight();
  ConstMapRM w_mat(w_eff.data(), c_out, k);
  Tensor out({n, c_out, h_out, w_out});

  const bool direct = (kh == 1 && kw == 1 && layer.stride_h == 1 &&
                       layer.stride_w == 1 && layer.pad_h == 0 && layer.pad_w == 0);
  std::vector<float> col;
  if (!direct) col.resize(static_cast<std::size_t>(k * p));

  for (std::int64_t i = 0; i < n; ++i) {
    const float* xi = x.data() + i * c_in * h * w;
    MapRM out_i(out.data() + i * c_out * p, c_out, p);
    if (direct) {
      ConstMapRM x_mat(xi, k, p);
      out_i.noalias() = w_mat * x_mat;
    } else {
      detail::im2col(xi, c_in, h, w, kh, kw, layer.stride_h, layer.stride_w,
                     layer.pad_h, layer.pad_w, h_out, w_out, col.data());
      ConstMapRM col_mat(col.data(), k, p);
      out_i.noalias() = w_mat * col_mat;
    }
  }
  if (!layer.bias.empty()) {
    if (layer.bias.numel() != c_out)
      throw ShapeError("conv2d: bias length does not match output channels");
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t o = 0; o < c_out; ++o) {
        float* dst = out.data() + (i * c_out + o) * p;
        const float b = layer.bias[o];
        for (std::int64_t q = 0; q < p; ++q) dst[q] += b;
      }
  }
  return out;
}

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;  // empty when the layer has no bias
};

inline Conv2dGrads conv2d_backward(const Conv2d& layer, const Tensor& x,
                                   const Tensor& grad_out) {
  const std::int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int kh = static_cast<int>(layer.weight.dim(2));
  const int kw = static_cast<int>(layer.weight.dim(3));
  const std::int64_t h_out =
      detail::conv_out_extent(h, kh, layer.stride_h, layer.pad_h, "height");
  const std::int64_t w_out =
      detail::conv_out_extent(w, kw, layer.stride_w, layer.pad_w, "width");
  const std::int64_t c_out = layer.out_channels();
  if (grad_out.shape() != std::vector<std::int64_t>{n, c_out, h_out, w_out})
    throw ShapeError("conv2d_backward: grad_out shape " +
                     Tensor::shape_string(grad_out.shape()) +
                     " does not match forward output");
  const std::int64_t k = c_in * kh * kw;
  const std::int64_t p = h_out * w_out;

  const Tensor w_eff = layer.effective_weight();
  ConstMapRM w_mat(w_eff.data(), c_out, k);

  Tensor grad_x = Tensor::zeros(x.shape());
  MatrixRM grad_w_mat = MatrixRM::Zero(c_out, k);

  const bool direct = (kh == 1 && kw == 1 && layer.stride_h == 1 &&
                       layer.stride_w == 1 && layer.pad_h == 0 && layer.pad_w == 0);
  std::vector<float> col;
  MatrixRM grad_col;
  if (!direct) {
    col.resize(static_cast<std::size_t>(k * p));
    grad_col.resize(k, p);
  }

  for (std::int64_t i = 0; i < n; ++i) {
    const float* xi = x.data() + i * c_in * h * w;
    ConstMapRM g_i(grad_out.data() + i * c_out * p, c_out, p);
    float* gx_i = grad_x.data() + i * c_in * h * w;
    if (direct) {
      ConstMapRM x_mat(xi, k, p);
      grad_w_mat.noalias() += g_i * x_mat.transpose();
      MapRM gx_mat(gx_i, k, p);
      gx_mat.noalias() = w_mat.transpose() * g_i;
    } else {
      detail::im2col(xi, c_in, h, w, kh, kw, layer.stride_h, layer.stride_w,
                     layer.pad_h, layer.pad_w, h_out, w_out, col.data());
      ConstMapRM col_mat(col.data(), k, p);
      grad_w_mat.noalias() += g_i * col_mat.transpose();
      grad_col.noalias() = w_mat.transpose() * g_i;
      detail::col2im_add(grad_col.data(), c_in, h, w, kh, kw, layer.stride_h,
                         layer.stride_w, layer.pad_h, layer.pad_w, h_out, w_out,
                         gx_i);
    }
  }

  Conv2dGrads grads;
  grads.input = std::move(grad_x);
  Tensor grad_w_std(layer.weight.shape());
  std::copy(grad_w_mat.data(), grad_w_mat.data() + grad_w_mat.size(),
            grad_w_std.data());
  grads.weight = layer.standardize_weights
                     ? weight_standardize_backward(layer.weight, layer.ws_eps,
                                                   grad_w_std)
                     : std::move(grad_w_std);
  if (!layer.bias.empty()) {
    Tensor gb({c_out});
    for (std::int64_t o = 0; o < c_out; ++o) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const float* g = grad_out.data() + (i * c_out + o) * p;
        for (std::int64_t q = 0; q < p; ++q) acc += g[q];
      }
      gb[o] = static_cast<float>(acc);
    }
    grads.bias = std::move(gb);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Group normalization
// ---------------------------------------------------------------------------

/// Per-sample normalization over channel groups (no cross-batch coupling).
struct GroupNorm {
  int num_groups = 1;
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  float eps = 1e-5f;
};

inline GroupNorm make_group_norm(std::int64_t channels, int num_groups,
                                 float eps = 1e-5f) {
  if (num_groups < 1 || channels % num_groups != 0)
    throw ConfigError("group_norm: " + std::to_string(channels) +
                      " channels not divisible by " +
                      std::to_string(num_groups) + " groups");
  GroupNorm gn;
  gn.num_groups = num_groups;
  gn.gamma = Tensor::full({channels}, 1.0f);
  gn.beta = Tensor::zeros({channels});
  gn.eps = eps;
  return gn;
}

struct GroupNormCache {
  Tensor mean;     // [N*G]
  Tensor inv_std;  // [N*G]
};

inline Tensor group_norm_forward(const GroupNorm& layer, const Tensor& x,
                                 GroupNormCache* cache = nullptr) {
  if (x.rank() != 4) throw ShapeError("group_norm: input must be [N,C,H,W]");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const int g = layer.num_groups;
  if (c % g != 0)
    throw ConfigError("group_norm: channel count " + std::to_string(c) +
                      " not divisible by " + std::to_string(g) + " groups");
  if (layer.gamma.numel() != c || layer.beta.numel() != c)
    throw ShapeError("group_norm: gamma/beta length must equal channel count");
  const std::int64_t gsz = c / g;
  const std::int64_t m = gsz * hw;

  Tensor mean({n * g});
  Tensor inv_std({n * g});
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    for (int gi = 0; gi < g; ++gi) {
      const float* src = x.data() + (i * c + gi * gsz) * hw;
      double sum = 0.0, sumsq = 0.0;
      for (std::int64_t j = 0; j < m; ++j) {
        sum += src[j];
        sumsq += static_cast<double>(src[j]) * src[j];
      }
      const double mu = sum / static_cast<double>(m);
      const double var = std::max(sumsq / static_cast<double>(m) - mu * mu, 0.0);
      const double is = 1.0 / std::sqrt(var + static_cast<double>(layer.eps));
      mean[i * g + gi] = static_cast<float>(mu);
      inv_std[i * g + gi] = static_cast<float>(is);
      for (std::int64_t ci = 0; ci < gsz; ++ci) {
        const std::int64_t ch = gi * gsz + ci;
        const float* xs = x.data() + (i * c + ch) * hw;
        float* ys = y.data() + (i * c + ch) * hw;
        const float gam = layer.gamma[ch], bet = layer.beta[ch];
        for (std::int64_t j = 0; j < hw; ++j)
          ys[j] = static_cast<float>(gam * (xs[j] - mu) * is + bet);
      }
    }
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

struct GroupNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

inline GroupNormGrads group_norm_backward(const GroupNorm& layer, const Tensor& x,
                                          const GroupNormCache& cache,
                                          const Tensor& grad_out) {
  detail::require_same_shape(x, grad_out, "group_norm_backward");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const int g = layer.num_groups;
  const std::int64_t gsz = c / g;
  const std::int64_t m = gsz * hw;

  GroupNormGrads grads;
  grads.input = Tensor(x.shape());
  grads.gamma = Tensor::zeros({c});
  grads.beta = Tensor::zeros({c});
  std::vector<double> ggamma(static_cast<std::size_t>(c), 0.0);
  std::vector<double> gbeta(static_cast<std::size_t>(c), 0.0);

  for (std::int64_t i = 0; i < n; ++i) {
    for (int gi = 0; gi < g; ++gi) {
      const double mu = cache.mean[i * g + gi];
      const double is = cache.inv_std[i * g + gi];
      // Reductions of gamma-weighted grad over the group.
      double s1 = 0.0, s2 = 0.0;
      for (std::int64_t ci = 0; ci < gsz; ++ci) {
        const std::int64_t ch = gi * gsz + ci;
        const float* xs = x.data() + (i * c + ch) * hw;
        const float* gs = grad_out.data() + (i * c + ch) * hw;
        const double gam = layer.gamma[ch];
        for (std::int64_t j = 0; j < hw; ++j) {
          const double xhat = (xs[j] - mu) * is;
          const double gg = gs[j] * gam;
          s1 += gg;
          s2 += gg * xhat;
          ggamma[static_cast<std::size_t>(ch)] += gs[j] * xhat;
          gbeta[static_cast<std::size_t>(ch)] += gs[j];
        }
      }
      s1 /= static_cast<double>(m);
      s2 /= static_cast<double>(m);
      for (std::int64_t ci = 0; ci < gsz; ++ci) {
        const std::int64_t ch = gi * gsz + ci;
        const float* xs = x.data() + (i * c + ch) * hw;
        const float* gs = grad_out.data() + (i * c + ch) * hw;
        float* dst = grads.input.data() + (i * c + ch) * hw;
        const double gam = layer.gamma[ch];
        for (std::int64_t j = 0; j < hw; ++j) {
          const double xhat = (xs[j] - mu) * is;
          dst[j] = static_cast<float>(is * (gs[j] * gam - s1 - xhat * s2));
        }
      }
    }
  }
  for (std::int64_t ch = 0; ch < c; ++ch) {
    grads.gamma[ch] = static_cast<float>(ggamma[static_cast<std::size_t>(ch)]);
    grads.beta[ch] = static_cast<float>(gbeta[static_cast<std::size_t>(ch)]);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Activations and pooling
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) { return max_with_scalar(x, 0.0f); }

/// Subgradient at exactly zero is zero.
inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  detail::require_same_shape(x, grad_out, "relu_backward");
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out[i] = x[i] > 0.0f ? grad_out[i] : 0.0f;
  return out;
}

struct MaxPoolCache {
  std::vector<std::int64_t> argmax;  // flat index into the input, per output cell
};

inline Tensor max_pool2d(const Tensor& x, int k, int stride, int pad,
                         MaxPoolCache* cache = nullptr) {
  if (x.rank() != 4) throw ShapeError("max_pool2d: input must be [N,C,H,W]");
  if (2 * pad >= k + 1)
    throw ShapeError("max_pool2d: padding must be smaller than half the window");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t h_out = detail::conv_out_extent(h, k, stride, pad, "height");
  const std::int64_t w_out = detail::conv_out_extent(w, k, stride, pad, "width");
  Tensor out({n, c, h_out, w_out});
  if (cache) cache->argmax.assign(static_cast<std::size_t>(out.numel()), -1);
  std::int64_t oi = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float* plane = x.data() + (i * c + ch) * h * w;
      const std::int64_t plane_off = (i * c + ch) * h * w;
      for (std::int64_t oh = 0; oh < h_out; ++oh) {
        for (std::int64_t ow = 0; ow < w_out; ++ow, ++oi) {
          float best = -std::numeric_limits<float>::infinity();
          std::int64_t best_idx = -1;
          for (int di = 0; di < k; ++di) {
            const std::int64_t ih = oh * stride - pad + di;
            if (ih < 0 || ih >= h) continue;
            for (int dj = 0; dj < k; ++dj) {
              const std::int64_t iw = ow * stride - pad + dj;
              if (iw < 0 || iw >= w) continue;
              const float v = plane[ih * w + iw];
              if (v > best) {
                best = v;
                best_idx = ih * w + iw;
              }
            }
          }
          out[oi] = best;
          if (cache) cache->argmax[static_cast<std::size_t>(oi)] = plane_off + best_idx;
        }
      }
    }
  }
  return out;
}

/// Routes each output-cell gradient to the cell that won the forward max.
inline Tensor max_pool2d_backward(const std::vector<std::int64_t>& input_shape,
                                  const MaxPoolCache& cache,
                                  const Tensor& grad_out) {
  Tensor grad_x = Tensor::zeros(input_shape);
  if (cache.argmax.size() != static_cast<std::size_t>(grad_out.numel()))
    throw ShapeError("max_pool2d_backward: cache does not match grad_out");
  for (std::int64_t i = 0; i < grad_out.numel(); ++i)
    grad_x[cache.argmax[static_cast<std::size_t>(i)]] += grad_out[i];
  return grad_x;
}

/// [N,C,H,W] -> [N,C], mean over the spatial plane.
inline Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool: input must be [N,C,H,W]");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({n, c});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const float* src = x.data() + i * hw;
    double acc = 0.0;
    for (std::int64_t j = 0; j < hw; ++j) acc += src[j];
    out[i] = static_cast<float>(acc / static_cast<double>(hw));
  }
  return out;
}

inline Tensor global_avg_pool_backward(const std::vector<std::int64_t>& input_shape,
                                       const Tensor& grad_out) {
  Tensor grad_x(input_shape);
  const std::int64_t hw = input_shape[2] * input_shape[3];
  const float inv = 1.0f / static_cast<float>(hw);
  for (std::int64_t i = 0; i < grad_out.numel(); ++i) {
    float* dst = grad_x.data() + i * hw;
    const float g = grad_out[i] * inv;
    for (std::int64_t j = 0; j < hw; ++j) dst[j] = g;
  }
  return grad_x;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

struct Dense {
  Tensor weight;  // [out_features, in_features]
  Tensor bias;    // [out_features]
};

inline Tensor dense_forward(const Dense& layer, const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("dense: input must be [N,F]");
  const std::int64_t n = x.dim(0), f = x.dim(1), o = layer.weight.dim(0);
  if (layer.weight.dim(1) != f)
    throw ShapeError("dense: input features " + std::to_string(f) +
                     " do not match weight fan-in " +
                     std::to_string(layer.weight.dim(1)));
  Tensor y({n, o});
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < o; ++j) {
      double acc = layer.bias.empty() ? 0.0 : layer.bias[j];
      const float* xr = x.data() + i * f;
      const float* wr = layer.weight.data() + j * f;
      for (std::int64_t p = 0; p < f; ++p)
        acc += static_cast<double>(xr[p]) * wr[p];
      y[i * o + j] = static_cast<float>(acc);
    }
  }
  return y;
}

struct DenseGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

inline DenseGrads dense_backward(const Dense& layer, const Tensor& x,
                                 const Tensor& grad_out) {
  const std::int64_t n = x.dim(0), f = x.dim(1), o = layer.weight.dim(0);
  if (grad_out.shape() != std::vector<std::int64_t>{n, o})
    throw ShapeError("dense_backward: grad_out shape mismatch");
  DenseGrads grads;
  grads.input = Tensor({n, f});
  grads.weight = Tensor({o, f});
  grads.bias = Tensor({o});
  for (std::int64_t i = 0; i < n; ++i) {
    const float* g = grad_out.data() + i * o;
    float* gx = grads.input.data() + i * f;
    for (std::int64_t p = 0; p < f; ++p) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < o; ++j)
        acc += static_cast<double>(g[j]) * layer.weight[j * f + p];
      gx[p] = static_cast<float>(acc);
    }
  }
  for (std::int64_t j = 0; j < o; ++j) {
    float* gw = grads.weight.data() + j * f;
    double gb = 0.0;
    for (std::int64_t p = 0; p < f; ++p) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i)
        acc += static_cast<double>(grad_out[i * o + j]) * x[i * f + p];
      gw[p] = static_cast<float>(acc);
    }
    for (std::int64_t i = 0; i < n; ++i) gb += grad_out[i * o + j];
    grads.bias[j] = static_cast<float>(gb);
  }
  return grads;
}

}  // namespace tinybit
