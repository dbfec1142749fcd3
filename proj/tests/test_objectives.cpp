#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "seqvessel/objectives.hpp"

using namespace seqvessel;

namespace {

void random_pair(std::size_t n, CounterRng& rng, TensorD& p, TensorD& y) {
  p = TensorD(TensorShape{n});
  y = TensorD(TensorShape{n});
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = rng.uniform(0.05, 0.95);
    y[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  }
}

template <typename LossFn>
double max_fd_error(LossFn loss, const TensorD& p, const TensorD& y) {
  const TensorD g = loss(p, y).grad;
  double worst = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double h = 1e-6;
    TensorD a = p, b = p;
    a[i] += h;
    b[i] -= h;
    const double num = (loss(a, y).value - loss(b, y).value) / (2 * h);
    worst = std::max(worst, std::abs(num - g[i]) / std::max({std::abs(num), std::abs(g[i]), 1e-8}));
  }
  return worst;
}

Tensor mask_from(std::initializer_list<float> v) { return Tensor::from(TensorShape{v.size()}, v); }

}  // namespace

TEST(DiceLoss, PerfectOverlapIsMinusOne) {
  for (std::size_t k : {0u, 1u, 5u}) {
    TensorD y(TensorShape{8});
    for (std::size_t i = 0; i < k; ++i) y[i] = 1.0;
    EXPECT_EQ(dice_loss(y, y).value, -1.0);
  }
}

TEST(DiceLoss, HandValue) {
  const TensorD p = TensorD::from(TensorShape{4}, {1, 1, 0, 0});
  const TensorD y = TensorD::from(TensorShape{4}, {1, 0, 1, 0});
  EXPECT_NEAR(dice_loss(p, y, 1e-15).value, -0.5, 1e-12);
}

TEST(DiceLoss, GradientMatchesFiniteDifferences) {
  CounterRng rng(1);
  TensorD p, y;
  random_pair(64, rng, p, y);
  EXPECT_LT(max_fd_error([](auto& a, auto& b) { return dice_loss(a, b); }, p, y), 1e-6);
}

TEST(DiceLoss, RangeAndShapeCheck) {
  CounterRng rng(2);
  for (int i = 0; i < 200; ++i) {
    TensorD p, y;
    random_pair(1 + rng.below(50), rng, p, y);
    const double l = dice_loss(p, y).value;
    EXPECT_GE(l, -1.0);
    EXPECT_LE(l, 0.0);
  }
  EXPECT_THROW(dice_loss(TensorD(TensorShape{3}), TensorD(TensorShape{4})), ShapeError);
}

TEST(CeLoss, HalfProbabilityIsLn2) {
  CounterRng rng(3);
  TensorD p, y;
  random_pair(20, rng, p, y);
  p.fill(0.5);
  EXPECT_NEAR(ce_loss(p, y).value, std::log(2.0), 1e-12);
}

TEST(CeLoss, PerfectPredictionNearZero) {
  const TensorD y = TensorD::from(TensorShape{4}, {1, 0, 0, 1});
  EXPECT_NEAR(ce_loss(y, y).value, -std::log1p(-kLogClamp), 1e-15);
}

TEST(CeLoss, GradientMatchesFiniteDifferences) {
  CounterRng rng(4);
  TensorD p, y;
  random_pair(64, rng, p, y);
  EXPECT_LT(max_fd_error([](auto& a, auto& b) { return ce_loss(a, b); }, p, y), 1e-6);
}

TEST(CeLoss, MovingTowardTargetDecreasesLoss) {
  CounterRng rng(5);
  TensorD p, y;
  random_pair(16, rng, p, y);
  for (std::size_t i = 0; i < 16; ++i) {
    TensorD q = p;
    q[i] += (y[i] - q[i]) * 0.5;
    EXPECT_LT(ce_loss(q, y).value, ce_loss(p, y).value);
  }
}

TEST(Losses, PermutationInvariant) {
  CounterRng rng(6);
  TensorD p, y;
  random_pair(30, rng, p, y);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  TensorD pp(p.shape()), yy(y.shape());
  for (std::size_t i = 0; i < 30; ++i) {
    pp[i] = p[perm[i]];
    yy[i] = y[perm[i]];
  }
  EXPECT_NEAR(dice_loss(p, y).value, dice_loss(pp, yy).value, 1e-12);
  EXPECT_NEAR(ce_loss(p, y).value, ce_loss(pp, yy).value, 1e-12);
  const auto m1 = segmentation_metrics(binarize(p), y), m2 = segmentation_metrics(binarize(pp), yy);
  EXPECT_EQ(m1.f, m2.f);
}

TEST(BatchLoss, AveragesPerSampleLosses) {
  CounterRng rng(7);
  TensorD p(TensorShape{2, 1, 3, 3}), y(TensorShape{2, 1, 3, 3});
  for (std::size_t i = 0; i < p.numel(); ++i) {
    p[i] = rng.uniform(0.1, 0.9);
    y[i] = rng.bernoulli(0.4);
  }
  auto part = [&](std::size_t n, const TensorD& t) {
    return TensorD::from(TensorShape{9}, std::span<const double>(t.data().subspan(n * 9, 9)));
  };
  const double want = 0.5 * (dice_loss(part(0, p), part(0, y)).value + dice_loss(part(1, p), part(1, y)).value);
  EXPECT_NEAR(batch_loss(LossKind::dice, p, y).value, want, 1e-12);
  EXPECT_EQ(parse_loss_kind("ce"), LossKind::ce);
  EXPECT_EQ(to_string(LossKind::dice), "dice");
  EXPECT_ANY_THROW(parse_loss_kind("focal"));
}

TEST(Binarize, ThresholdConvention) {
  const Tensor p = mask_from({0.2f, 0.5f, 0.8f});
  EXPECT_EQ(binarize(p, 0.5).values(), std::vector<float>({0, 1, 1}));
  EXPECT_EQ(binarize(p, 0.2).values(), std::vector<float>({1, 1, 1}));
  EXPECT_EQ(binarize(binarize(p, 0.5), 0.5).values(), binarize(p, 0.5).values());
}

TEST(Metrics, HandCounts) {
  // TP 8, FN 2, FP 2, TN 8
  Tensor pred(TensorShape{20}), gt(TensorShape{20});
  for (std::size_t i = 0; i < 10; ++i) gt[i] = 1.0f;
  for (std::size_t i = 0; i < 8; ++i) pred[i] = 1.0f;
  pred[10] = pred[11] = 1.0f;
  const auto c = confusion(pred, gt);
  EXPECT_EQ(c.tp, 8u);
  EXPECT_EQ(c.fn, 2u);
  EXPECT_EQ(c.fp, 2u);
  EXPECT_EQ(c.tn, 8u);
  const auto m = segmentation_metrics(pred, gt);
  EXPECT_DOUBLE_EQ(m.dr, 0.8);
  EXPECT_DOUBLE_EQ(m.p, 0.8);
  EXPECT_DOUBLE_EQ(m.f, 0.8);
}

TEST(Metrics, PerfectAndEmptyConventions) {
  const Tensor g = mask_from({1, 0, 1, 0});
  const auto m = segmentation_metrics(g, g);
  EXPECT_EQ(m.dr, 1.0);
  EXPECT_EQ(m.p, 1.0);
  EXPECT_EQ(m.f, 1.0);
  const Tensor zero(TensorShape{4});
  const auto e = segmentation_metrics(zero, zero);
  EXPECT_EQ(e.dr, 1.0);
  EXPECT_EQ(e.p, 1.0);
  const auto miss = segmentation_metrics(zero, g);
  EXPECT_EQ(miss.dr, 0.0);
  EXPECT_EQ(miss.f, 0.0);
}

TEST(Metrics, RandomPairsMatchCountingOracle) {
  CounterRng rng(8);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(100);
    Tensor pred(TensorShape{n}), gt(TensorShape{n});
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.bernoulli(0.4);
      gt[i] = rng.bernoulli(0.4);
    }
    const auto m = segmentation_metrics(pred, gt);
    const auto want = oracle::prf(oracle::count(pred, gt));
    EXPECT_EQ(m.dr, want.dr);
    EXPECT_EQ(m.p, want.p);
    EXPECT_EQ(m.f, want.f);
    if (m.dr > 0 && m.p > 0) {
      EXPECT_LE(m.f, std::max(m.dr, m.p));
      EXPECT_GE(m.f, std::min(m.dr, m.p));
    }
  }
}

TEST(Gve, HandCases) {
  auto volumes = [](std::size_t vg, std::size_t vp) {
    Tensor g(TensorShape{16, 16}), p(TensorShape{16, 16});
    for (std::size_t i = 0; i < vg; ++i) g[i] = 1.0f;
    for (std::size_t i = 0; i < vp; ++i) p[255 - i] = 1.0f;
    return gve(p, g);
  };
  EXPECT_EQ(volumes(200, 180), 10.0);
  EXPECT_EQ(volumes(100, 150), 50.0);
  const Tensor g = mask_from({1, 1, 0});
  EXPECT_EQ(gve(g, g), 0.0);
  try {
    gve(g, Tensor(TensorShape{3}));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("empty ground truth"), std::string::npos);
  }
}

TEST(Gve, ScaleFree) {
  CounterRng rng(9);
  Tensor p(TensorShape{10}), g(TensorShape{10});
  for (std::size_t i = 0; i < 10; ++i) {
    p[i] = rng.bernoulli(0.5);
    g[i] = i < 4 ? 1.0f : 0.0f;
  }
  Tensor p2(TensorShape{20}), g2(TensorShape{20});
  for (std::size_t i = 0; i < 20; ++i) {
    p2[i] = p[i % 10];
    g2[i] = g[i % 10];
  }
  EXPECT_DOUBLE_EQ(gve(p, g), gve(p2, g2));
}

TEST(MetricsCsv, FormatAndSummary) {
  std::vector<MetricsRow> rows = {{"a", {1.0, 0.5, 2.0 / 3.0, 10.0}}, {"b", {0.5, 0.5, 0.5, std::nan("")}}};
  std::ostringstream out;
  write_metrics_csv(out, rows);
  EXPECT_EQ(out.str(),
            "sample_id,DR,P,F,GVE\n"
            "a,1.000000,0.500000,0.666667,10.000000\n"
            "b,0.500000,0.500000,0.500000,nan\n");
  const auto s = summarize(rows);
  EXPECT_EQ(s.count, 2u);
  EXPECT_DOUBLE_EQ(s.mean.dr, 0.75);
  EXPECT_DOUBLE_EQ(s.stddev.dr, 0.25);
  EXPECT_DOUBLE_EQ(s.mean.gve_percent, 10.0);
}
