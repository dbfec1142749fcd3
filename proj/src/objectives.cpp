#include "seqvessel/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace seqvessel {

namespace {

template <typename S>
void require_same_shape(const BasicTensor<S>& a, const BasicTensor<S>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

template <typename S>
LossResult<S> dice_loss(const BasicTensor<S>& p, const BasicTensor<S>& y, double epsilon) {
  require_same_shape(p, y, "dice_loss");
  double inter = 0.0, sum_p = 0.0, sum_y = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    inter += static_cast<double>(p[i]) * y[i];
    sum_p += p[i];
    sum_y += y[i];
  }
  const double num = 2.0 * inter + epsilon;
  const double den = sum_p + sum_y + epsilon;
  LossResult<S> r;
  r.value = -num / den;
  r.grad = BasicTensor<S>(p.shape());
  // Quotient rule: dL/dp_i = -(2 y_i den - num) / den^2.
  const double inv_den2 = 1.0 / (den * den);
  for (std::size_t i = 0; i < p.numel(); ++i) {
    r.grad[i] = static_cast<S>(-(2.0 * y[i] * den - num) * inv_den2);
  }
  return r;
}

template <typename S>
LossResult<S> ce_loss(const BasicTensor<S>& p, const BasicTensor<S>& y, double delta) {
  require_same_shape(p, y, "ce_loss");
  const double n = static_cast<double>(p.numel());
  LossResult<S> r;
  r.grad = BasicTensor<S>(p.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double raw = p[i];
    const double q = std::clamp(raw, delta, 1.0 - delta);
    const double t = y[i];
    acc += t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    const bool active = raw > delta && raw < 1.0 - delta;
    r.grad[i] = active ? static_cast<S>(-(t / q - (1.0 - t) / (1.0 - q)) / n) : S{0};
  }
  r.value = -acc / n;
  return r;
}

std::string to_string(LossKind kind) { return kind == LossKind::dice ? "dice" : "ce"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "dice") return LossKind::dice;
  if (s == "ce") return LossKind::ce;
  throw std::invalid_argument("unknown loss '" + s + "' (expected dice or ce)");
}

template <typename S>
LossResult<S> batch_loss(LossKind kind, const BasicTensor<S>& p, const BasicTensor<S>& y) {
  require_same_shape(p, y, "batch_loss");
  const std::size_t n = p.dim(0), per = p.numel() / n;
  const TensorShape one{per};
  LossResult<S> r;
  r.grad = BasicTensor<S>(p.shape());
  for (std::size_t b = 0; b < n; ++b) {
    auto pb = BasicTensor<S>::from(one, p.data().subspan(b * per, per));
    auto yb = BasicTensor<S>::from(one, y.data().subspan(b * per, per));
    auto lb = kind == LossKind::dice ? dice_loss(pb, yb) : ce_loss(pb, yb);
    r.value += lb.value / static_cast<double>(n);
    for (std::size_t i = 0; i < per; ++i) r.grad[b * per + i] = lb.grad[i] / static_cast<S>(n);
  }
  return r;
}

template <typename S>
BasicTensor<S> binarize(const BasicTensor<S>& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must be in (0, 1)");
  BasicTensor<S> m(p.shape());
  for (std::size_t i = 0; i < p.numel(); ++i) m[i] = static_cast<double>(p[i]) >= threshold ? S{1} : S{0};
  return m;
}

template <typename S>
ConfusionCounts confusion(const BasicTensor<S>& pred, const BasicTensor<S>& gt) {
  require_same_shape(pred, gt, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const S a = pred[i], b = gt[i];
    if ((a != S{0} && a != S{1}) || (b != S{0} && b != S{1})) {
      throw std::invalid_argument("confusion: masks must be binary");
    }
    const bool pp = a == S{1}, gp = b == S{1};
    if (pp && gp) ++c.tp;
    else if (pp) ++c.fp;
    else if (gp) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MetricsRecord metrics_from_counts(const ConfusionCounts& c) {
  MetricsRecord m;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fn == 0) m.dr = c.fp == 0 ? 1.0 : 0.0;
  else m.dr = tp / static_cast<double>(c.tp + c.fn);
  if (c.tp + c.fp == 0) m.p = c.fn == 0 ? 1.0 : 0.0;
  else m.p = tp / static_cast<double>(c.tp + c.fp);
  m.f = (m.dr + m.p) == 0.0 ? 0.0 : 2.0 * m.dr * m.p / (m.dr + m.p);
  return m;
}

template <typename S>
double gve(const BasicTensor<S>& pred, const BasicTensor<S>& gt) {
  require_same_shape(pred, gt, "gve");
  double vp = 0.0, vg = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    vp += pred[i] > S{0} ? 1.0 : 0.0;
    vg += gt[i] > S{0} ? 1.0 : 0.0;
  }
  if (vg == 0.0) throw std::invalid_argument("gve: empty ground truth");
  return std::abs(vg - vp) / vg * 100.0;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "sample_id,DR,P,F,GVE\n";
  char buf[160];
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f\n", m.dr, m.p, m.f, m.gve_percent);
    out << r.sample_id << buf;
  }
}

MetricsSummary summarize(const std::vector<MetricsRow>& rows) {
  MetricsSummary s;
  s.count = rows.size();
  if (rows.empty()) return s;
  auto stat = [&](auto field, double& mean, double& sd) {
    double sum = 0.0, n = 0.0;
    for (const auto& r : rows) {
      const double v = field(r.metrics);
      if (std::isnan(v)) continue;
      sum += v;
      n += 1.0;
    }
    if (n == 0.0) {
      mean = sd = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    mean = sum / n;
    double sq = 0.0;
    for (const auto& r : rows) {
      const double v = field(r.metrics);
      if (!std::isnan(v)) sq += (v - mean) * (v - mean);
    }
    sd = std::sqrt(sq / n);
  };
  stat([](const MetricsRecord& m) { return m.dr; }, s.mean.dr, s.stddev.dr);
  stat([](const MetricsRecord& m) { return m.p; }, s.mean.p, s.stddev.p);
  stat([](const MetricsRecord& m) { return m.f; }, s.mean.f, s.stddev.f);
  stat([](const MetricsRecord& m) { return m.gve_percent; }, s.mean.gve_percent, s.stddev.gve_percent);
  return s;
}

#define SEQVESSEL_INSTANTIATE(S)                                                                  \
  template LossResult<S> dice_loss(const BasicTensor<S>&, const BasicTensor<S>&, double);         \
  template LossResult<S> ce_loss(const BasicTensor<S>&, const BasicTensor<S>&, double);           \
  template LossResult<S> batch_loss(LossKind, const BasicTensor<S>&, const BasicTensor<S>&);      \
  template BasicTensor<S> binarize(const BasicTensor<S>&, double);                                \
  template ConfusionCounts confusion(const BasicTensor<S>&, const BasicTensor<S>&);               \
  template double gve(const BasicTensor<S>&, const BasicTensor<S>&);

SEQVESSEL_INSTANTIATE(float)
SEQVESSEL_INSTANTIATE(double)

#undef SEQVESSEL_INSTANTIATE

}  // namespace seqvessel
