#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "tinybit/tensor.hpp"

namespace tinybit {

/// Binary-classification tallies. "Positive" is the caller's chosen class
/// (the malignant side of a benign/malignant split, by convention).
struct ConfusionCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

/// Percentage of correct predictions: (TP+TN) / (TP+TN+FP+FN) * 100.
inline double accuracy(const ConfusionCounts& c) {
  if (c.total() < 1)
    throw RangeError("accuracy: confusion counts are empty");
  return 100.0 * static_cast<double>(c.tp + c.tn) /
         static_cast<double>(c.total());
}

/// Tally one binary prediction. Exactly one field is incremented.
inline void confusion_update(ConfusionCounts& c, int predicted, int actual,
                             int positive_class) {
  const bool pred_pos = predicted == positive_class;
  const bool act_pos = actual == positive_class;
  if (pred_pos && act_pos)
    ++c.tp;
  else if (pred_pos && !act_pos)
    ++c.fp;
  else if (!pred_pos && act_pos)
    ++c.fn;
  else
    ++c.tn;
}

/// Probabilities are clamped into [kProbClamp, 1-kProbClamp] before logs so a
/// saturated prediction cannot produce an infinite loss.
constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy of probabilities yhat against labels in {0,1}.
inline double binary_cross_entropy(const std::vector<int>& y,
                                   const std::vector<float>& yhat) {
  if (y.empty() || y.size() != yhat.size())
    throw RangeError("binary_cross_entropy: need matching, nonempty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p =
        std::clamp(static_cast<double>(yhat[i]), kProbClamp, 1.0 - kProbClamp);
    acc += y[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -acc / static_cast<double>(y.size());
}

/// Binary cross-entropy composed with a sigmoid over logits; the returned
/// gradient w.r.t. each logit is (sigmoid(z) - y) / N.
inline std::pair<double, Tensor> binary_cross_entropy_with_logits(
    const std::vector<int>& y, const Tensor& logits) {
  if (y.empty() || logits.numel() != static_cast<std::int64_t>(y.size()))
    throw RangeError("bce_with_logits: need matching, nonempty inputs");
  const double n = static_cast<double>(y.size());
  Tensor grad(logits.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = logits[static_cast<std::int64_t>(i)];
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    acc += y[i] ? std::log(pc) : std::log(1.0 - pc);
    grad[static_cast<std::int64_t>(i)] = static_cast<float>((p - y[i]) / n);
  }
  return {-acc / n, std::move(grad)};
}

namespace detail {

inline void log_softmax_row(const float* logits, std::int64_t k,
                            std::vector<double>& out) {
  double max_v = logits[0];
  for (std::int64_t j = 1; j < k; ++j) max_v = std::max(max_v, double(logits[j]));
  double sum = 0.0;
  for (std::int64_t j = 0; j < k; ++j) sum += std::exp(logits[j] - max_v);
  const double log_sum = std::log(sum) + max_v;
  out.resize(static_cast<std::size_t>(k));
  for (std::int64_t j = 0; j < k; ++j)
    out[static_cast<std::size_t>(j)] = logits[j] - log_sum;
}

}  // namespace detail

/// Mean negative log-likelihood of integer class labels under a softmax over
/// logits [N,K]; the gradient is (softmax - onehot)/N.
inline std::pair<double, Tensor> softmax_cross_entropy(
    const std::vector<int>& y, const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_ce: logits must be [N,K]");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(y.size()) != n)
    throw ShapeError("softmax_ce: label count does not match batch");
  Tensor grad(logits.shape());
  double loss = 0.0;
  std::vector<double> logp;
  for (std::int64_t i = 0; i < n; ++i) {
    if (y[static_cast<std::size_t>(i)] < 0 || y[static_cast<std::size_t>(i)] >= k)
      throw RangeError("softmax_ce: label " +
                       std::to_string(y[static_cast<std::size_t>(i)]) +
                       " out of range for " + std::to_string(k) + " classes");
    detail::log_softmax_row(logits.data() + i * k, k, logp);
    loss -= logp[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
    for (std::int64_t j = 0; j < k; ++j) {
      const double p = std::exp(logp[static_cast<std::size_t>(j)]);
      const double target = (j == y[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
      grad[i * k + j] = static_cast<float>((p - target) / static_cast<double>(n));
    }
  }
  return {loss / static_cast<double>(n), std::move(grad)};
}

/// Soft-label overload for MixUp targets: loss = -(1/N) sum_ik t_ik log p_ik,
/// gradient (softmax - t)/N. Rows of t are expected to sum to 1.
inline std::pair<double, Tensor> softmax_cross_entropy_soft(
    const Tensor& targets, const Tensor& logits) {
  detail::require_same_shape(targets, logits, "softmax_ce_soft");
  if (logits.rank() != 2) throw ShapeError("softmax_ce_soft: logits must be [N,K]");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  Tensor grad(logits.shape());
  double loss = 0.0;
  std::vector<double> logp;
  for (std::int64_t i = 0; i < n; ++i) {
    detail::log_softmax_row(logits.data() + i * k, k, logp);
    for (std::int64_t j = 0; j < k; ++j) {
      const double t = targets[i * k + j];
      loss -= t * logp[static_cast<std::size_t>(j)];
      const double p = std::exp(logp[static_cast<std::size_t>(j)]);
      grad[i * k + j] = static_cast<float>((p - t) / static_cast<double>(n));
    }
  }
  return {loss / static_cast<double>(n), std::move(grad)};
}

/// One row of the per-epoch training curve.
struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // percent
  double val_loss = 0.0;
  double val_acc = 0.0;  // percent
  double lr = 0.0;
  double wall_seconds = 0.0;
};

inline std::string epoch_metrics_csv_header() {
  return "epoch,train_loss,train_acc,val_loss,val_acc,lr,wall_seconds";
}

inline std::string to_csv_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", m.epoch,
                m.train_loss, m.train_acc, m.val_loss, m.val_acc, m.lr,
                m.wall_seconds);
  return buf;
}

}  // namespace tinybit
