#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "seqvessel/layers.hpp"
#include "seqvessel/svsnet.hpp"

using namespace seqvessel;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.stages = 2;
  c.base_channels = 2;
  c.height = c.width = 16;
  return c;
}

Tensor random_batch(const NetworkConfig& c, std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor x(TensorShape{n, c.window, c.height, c.width});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
  return x;
}

}  // namespace

TEST(NetworkConfig, ChannelsAndValidation) {
  NetworkConfig c;
  EXPECT_EQ(c.channels(1), 8u);
  EXPECT_EQ(c.channels(7), 512u);
  c.channel_cap = 100;
  EXPECT_EQ(c.channels(7), 100u);
  EXPECT_EQ(c.target_index(), 2u);
  NetworkConfig bad = oracle::desk_config();
  bad.height = 60;  // not divisible by 2^(S-1) = 8
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = oracle::desk_config();
  bad.stages = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(SvsNet, DeskShapes) {
  const NetworkConfig cfg = oracle::desk_config();
  SvsNet<float> net(cfg, 1);
  const Tensor p = net.forward(random_batch(cfg, 1, 2), Mode::infer);
  const std::vector<TensorShape> enc = {{4, 4, 64, 64}, {8, 4, 32, 32}, {16, 4, 16, 16}, {32, 4, 8, 8}};
  const std::vector<TensorShape> fused = {{4, 64, 64}, {8, 32, 32}, {16, 16, 16}, {32, 8, 8}};
  EXPECT_EQ(net.shapes().encoder, enc);
  EXPECT_EQ(net.shapes().fused, fused);
  EXPECT_EQ(net.shapes().output, TensorShape({1, 64, 64}));
  EXPECT_EQ(p.shape(), TensorShape({1, 1, 64, 64}));
}

TEST(SvsNet, SameSeedSameParameters) {
  SvsNet<float> a(oracle::desk_config(), 7), b(oracle::desk_config(), 7), c(oracle::desk_config(), 8);
  bool any_diff = false;
  for (const auto& [name, p] : a.store().params()) {
    EXPECT_EQ(p.value.values(), b.store().at(name).value.values()) << name;
    any_diff = any_diff || p.value.values() != c.store().at(name).value.values();
  }
  EXPECT_TRUE(any_diff);
}

TEST(SvsNet, ParamCountMatchesOracle) {
  NetworkConfig minimal = tiny_config();
  minimal.base_channels = 1;
  EXPECT_EQ(param_count(minimal), 435u);
  EXPECT_EQ(oracle::param_count(minimal), 435u);

  for (NetworkConfig c : {oracle::desk_config(), tiny_config()}) {
    for (bool att : {true, false})
      for (bool dw : {false, true})
        for (EncoderKind e : {EncoderKind::conv3d, EncoderKind::conv2d}) {
          c.attention = att;
          c.ffo_depthwise = dw;
          c.encoder = e;
          SvsNet<float> net(c, 0);
          EXPECT_EQ(param_count(c), oracle::param_count(c));
          EXPECT_EQ(net.store().scalar_count(), param_count(c));
        }
  }
}

TEST(SvsNet, ParamCountFullScaleReport) {
  NetworkConfig full;
  const std::size_t n = param_count(full);
  EXPECT_EQ(n, oracle::param_count(full));
  // Reported only: the analytic count at the default 7-stage width.
  RecordProperty("full_scale_params", std::to_string(n));
  std::printf("full-scale parameter count: %zu\n", n);
}

TEST(SvsNet, DoublingBaseRoughlyQuadruplesConvWeights) {
  auto conv_weights = [](std::size_t base) {
    NetworkConfig c = oracle::desk_config();
    c.base_channels = base;
    SvsNet<float> net(c, 0);
    std::size_t n = 0;
    for (const auto& [name, p] : net.store().params()) {
      if (p.value.rank() >= 4) n += p.value.numel();
    }
    return static_cast<double>(n);
  };
  const double ratio = conv_weights(8) / conv_weights(4);
  EXPECT_NEAR(ratio, 4.0, 0.4);
}

TEST(SvsNet, OutputInOpenUnitIntervalAndNonConstant) {
  const NetworkConfig cfg = oracle::desk_config();
  SvsNet<float> net(cfg, 3);
  const Tensor p = net.forward(random_batch(cfg, 2, 4), Mode::infer);
  double s = 0, s2 = 0;
  for (float v : p.data()) {
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(p.numel());
  EXPECT_GT(s2 / n - (s / n) * (s / n), 0.0);
}

TEST(SvsNet, InferIsDeterministic) {
  const NetworkConfig cfg = oracle::desk_config();
  SvsNet<float> net(cfg, 3);
  const Tensor x = random_batch(cfg, 1, 5);
  EXPECT_EQ(net.forward(x, Mode::infer).values(), net.forward(x, Mode::infer).values());
}

TEST(SvsNet, TrainModeNeedsRngWhenDropoutActive) {
  const NetworkConfig cfg = tiny_config();
  SvsNet<float> net(cfg, 3);
  EXPECT_ANY_THROW(net.forward(random_batch(cfg, 2, 1), Mode::train));
}

TEST(SvsNet, BackwardWithoutForwardThrows) {
  SvsNet<float> net(tiny_config(), 3);
  EXPECT_ANY_THROW(net.backward(Tensor(TensorShape{1, 1, 16, 16})));
}

TEST(SvsNet, ZeroUpstreamGivesZeroGradients) {
  const NetworkConfig cfg = tiny_config();
  SvsNet<double> net(cfg, 3);
  CounterRng rng(1);
  net.forward(random_batch(cfg, 2, 6).cast<double>(), Mode::train, &rng);
  net.backward(TensorD(TensorShape{2, 1, 16, 16}));
  for (const auto& [name, p] : net.store().params()) {
    for (double g : p.grad.data()) ASSERT_EQ(g, 0.0) << name;
  }
}

TEST(SvsNet, GradientsAccumulateAcrossBackwardCalls) {
  const NetworkConfig cfg = tiny_config();
  SvsNet<double> net(cfg, 3);
  const TensorD x = random_batch(cfg, 2, 7).cast<double>();
  CounterRng rng(2);
  TensorD up(TensorShape{2, 1, 16, 16});
  for (auto& v : up.data()) v = rng.normal();
  CounterRng d1(9);
  net.forward(x, Mode::train, &d1);
  net.backward(up);
  std::map<std::string, std::vector<double>> once;
  for (const auto& [name, p] : net.store().params()) once[name] = p.grad.values();
  CounterRng d2(9);
  net.forward(x, Mode::train, &d2);
  net.backward(up);
  for (const auto& [name, p] : net.store().params()) {
    for (std::size_t i = 0; i < p.grad.numel(); ++i) ASSERT_NEAR(p.grad[i], 2 * once[name][i], 1e-9) << name;
  }
}

TEST(SvsNet, AttentionWeightsInOpenInterval) {
  const NetworkConfig cfg = oracle::desk_config();
  SvsNet<float> net(cfg, 3);
  net.forward(random_batch(cfg, 1, 8), Mode::infer);
  const auto w = net.attention_weights();
  ASSERT_EQ(w.size(), cfg.stages - 1);
  for (const auto& t : w)
    for (float v : t.data()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  NetworkConfig off = cfg;
  off.attention = false;
  SvsNet<float> naive(off, 3);
  naive.forward(random_batch(off, 1, 8), Mode::infer);
  EXPECT_TRUE(naive.attention_weights().empty());
}

TEST(SvsNet, TwoDimensionalEncoderUsesTargetFrame) {
  NetworkConfig cfg = oracle::desk_config();
  cfg.encoder = EncoderKind::conv2d;
  SvsNet<float> net(cfg, 3);
  Tensor x = random_batch(cfg, 1, 9);
  const Tensor p1 = net.forward(x, Mode::infer);
  // Changing a non-target frame must not move the output.
  const std::size_t plane = cfg.height * cfg.width;
  for (std::size_t i = 0; i < plane; ++i) x[i] = 0.0f;
  EXPECT_EQ(net.forward(x, Mode::infer).values(), p1.values());
  EXPECT_EQ(net.shapes().encoder.front(), TensorShape({4, 64, 64}));
}

TEST(ResidualBlock, ZeroBranchIsRelu) {
  ParameterStore<double> store;
  ResidualBlock<double> block(store, "b", 2, 2, Dims::two, CounterRng(1));
  for (auto& [name, p] : store.params()) {
    if (name.find("conv") != std::string::npos) p.value.fill(0.0);
  }
  CounterRng rng(2);
  const TensorD x = oracle::random_tensor(TensorShape{1, 2, 4, 4}, rng);
  const TensorD y = block.forward(x, Mode::train);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], std::max(0.0, x[i]));
}

TEST(FeatureFusion, TemporalAverage) {
  ParameterStore<double> store;
  FeatureFusion<double> ffo(store, "f", 2, 4, false, CounterRng(1));
  ffo.weight().value.fill(0.0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 4; ++t) ffo.weight().value.at({c, c, t, 0, 0}) = 0.25;
  CounterRng rng(3);
  const TensorD x = oracle::random_tensor(TensorShape{1, 2, 4, 3, 3}, rng);
  const TensorD y = ffo.forward(x);
  ASSERT_EQ(y.shape(), TensorShape({1, 2, 3, 3}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 9; ++i) {
      double m = 0;
      for (std::size_t t = 0; t < 4; ++t) m += x[(c * 4 + t) * 9 + i];
      EXPECT_NEAR(y[c * 9 + i], m / 4, 1e-12);
    }
  EXPECT_THROW(ffo.forward(TensorD(TensorShape{1, 2, 3, 3, 3})), ShapeError);
}

TEST(FeatureFusion, MatchesConvOracle) {
  ParameterStore<double> store;
  FeatureFusion<double> ffo(store, "f", 2, 4, false, CounterRng(5));
  CounterRng rng(4);
  for (auto& v : ffo.bias().value.data()) v = rng.normal();
  const TensorD x = oracle::random_tensor(TensorShape{1, 2, 4, 3, 3}, rng);
  const TensorD want = oracle::conv3d(x, ffo.weight().value, ffo.bias().value, ConvSpec{});
  const TensorD y = ffo.forward(x);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], want[i], 1e-6);
}

TEST(ChannelAttention, ZeroWeightsHalveLow) {
  ParameterStore<double> store;
  ChannelAttention<double> cab(store, "c", 2, CounterRng(1));
  for (auto& [_, p] : store.params()) p.value.fill(0.0);
  CounterRng rng(2);
  const TensorD low = oracle::random_tensor(TensorShape{1, 2, 4, 4}, rng);
  const TensorD high = oracle::random_tensor(TensorShape{1, 2, 4, 4}, rng);
  const TensorD y = cab.forward(low, high);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.5 * low[i] + high[i]);
}

TEST(ChannelAttention, ZeroLowPassesHigh) {
  ParameterStore<double> store;
  ChannelAttention<double> cab(store, "c", 3, CounterRng(4));
  CounterRng rng(5);
  const TensorD high = oracle::random_tensor(TensorShape{2, 3, 4, 4}, rng);
  const TensorD y = cab.forward(TensorD(high.shape()), high);
  EXPECT_EQ(y.values(), high.values());
  for (double w : cab.weights().data()) {
    EXPECT_GT(w, 0.0);
    EXPECT_LT(w, 1.0);
  }
  EXPECT_THROW(cab.forward(TensorD(TensorShape{2, 3, 4, 2}), high), ShapeError);
}

TEST(StackWindows, BuildsBatch) {
  FrameWindow a{Tensor(TensorShape{4, 2, 2}, 1.0f), 2}, b{Tensor(TensorShape{4, 2, 2}, 2.0f), 2};
  const Tensor x = stack_windows({&a, &b});
  EXPECT_EQ(x.shape(), TensorShape({2, 4, 2, 2}));
  EXPECT_EQ(x[16], 2.0f);
  FrameWindow c{Tensor(TensorShape{4, 3, 2}), 2};
  EXPECT_THROW(stack_windows({&a, &c}), ShapeError);
}
