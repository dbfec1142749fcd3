#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "seqvessel/tensor.hpp"

namespace seqvessel {

inline constexpr double kDiceEpsilon = 1e-7;
inline constexpr double kLogClamp = 1e-7;

template <typename S>
struct LossResult {
  double value = 0.0;
  BasicTensor<S> grad;  // d loss / d p, shape of p
};

/// L = -(2 sum(p*y) + eps) / (sum(p) + sum(y) + eps), over the whole mask.
/// Lies in [-1, 0]; exactly -1 when p == y is binary.
template <typename S>
LossResult<S> dice_loss(const BasicTensor<S>& p, const BasicTensor<S>& y, double epsilon = kDiceEpsilon);

/// Mean binary cross-entropy with p clamped to [delta, 1 - delta]:
/// L = -(1/N) sum(y log p + (1-y) log(1-p)). The gradient is zero where the
/// clamp is active.
template <typename S>
LossResult<S> ce_loss(const BasicTensor<S>& p, const BasicTensor<S>& y, double delta = kLogClamp);

enum class LossKind { dice, ce };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& s);

/// Per-sample loss over a [N, ...] batch averaged over N; the gradient is
/// scaled by 1/N accordingly.
template <typename S>
LossResult<S> batch_loss(LossKind kind, const BasicTensor<S>& p, const BasicTensor<S>& y);

/// mask_i = 1 iff p_i >= threshold.
template <typename S>
BasicTensor<S> binarize(const BasicTensor<S>& p, double threshold = 0.5);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsRecord {
  double dr = 0.0;  // detection rate (recall)
  double p = 0.0;   // precision
  double f = 0.0;   // harmonic mean of dr and p
  double gve_percent = 0.0;  // NaN when the ground truth is empty
};

/// Counts over binary masks of equal shape (values must be exactly 0 or 1).
template <typename S>
ConfusionCounts confusion(const BasicTensor<S>& pred, const BasicTensor<S>& gt);

/// DR = TP/(TP+FN), P = TP/(TP+FP), F = 2 DR P / (DR + P).
/// Empty denominators: DR = 1 if also FP = 0 else 0 (P symmetric with FN);
/// F = 0 when DR + P = 0. gve_percent is left at 0.
MetricsRecord metrics_from_counts(const ConfusionCounts& c);

template <typename S>
MetricsRecord segmentation_metrics(const BasicTensor<S>& pred, const BasicTensor<S>& gt) {
  return metrics_from_counts(confusion(pred, gt));
}

/// |V(gt) - V(pred)| / V(gt) * 100, V counting positive pixels. Throws on an
/// empty ground truth.
template <typename S>
double gve(const BasicTensor<S>& pred, const BasicTensor<S>& gt);

struct MetricsRow {
  std::string sample_id;
  MetricsRecord metrics;
};

/// CSV "sample_id,DR,P,F,GVE" with a header row, 6 decimals, '\n' endings.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

struct MetricsSummary {
  MetricsRecord mean, stddev;  // population std; GVE stats skip NaN rows
  std::size_t count = 0;
};

MetricsSummary summarize(const std::vector<MetricsRow>& rows);

}  // namespace seqvessel
