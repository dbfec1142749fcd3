#include "seqvessel/svsnet.hpp"

#include <algorithm>
#include <cmath>

namespace seqvessel {

namespace {

// Logits are clamped so float probabilities stay strictly inside (0,1).
constexpr double kLogitLimit = 16.0;

std::string stage_name(const char* part, std::size_t s) { return std::string(part) + ".s" + std::to_string(s); }

}  // namespace

std::size_t NetworkConfig::channels(std::size_t stage) const {
  std::size_t c = base_channels;
  for (std::size_t s = 1; s < stage && c < channel_cap; ++s) c *= 2;
  return std::min(c, channel_cap);
}

void NetworkConfig::validate() const {
  if (stages < 2) throw ConfigError("stages must be >= 2");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (channel_cap < 1) throw ConfigError("channel_cap must be >= 1");
  if (window < 1) throw ConfigError("window must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (encoder == EncoderKind::conv2d && encoder2d_blocks < 1) throw ConfigError("encoder2d_blocks must be >= 1");
  const std::size_t factor = std::size_t{1} << (stages - 1);
  if (height == 0 || width == 0 || height % factor != 0 || width % factor != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by 2^(stages-1) = " + std::to_string(factor));
  }
}

std::size_t param_count(const NetworkConfig& cfg) {
  cfg.validate();
  auto conv = [](std::size_t ci, std::size_t co, std::size_t kvol) { return co * ci * kvol + co; };
  auto bn = [](std::size_t c) { return 2 * c; };
  auto block = [&](std::size_t c, std::size_t kvol) { return 2 * (conv(c, c, kvol) + bn(c)); };
  const bool is3d = cfg.encoder == EncoderKind::conv3d;
  const std::size_t kvol = is3d ? 27 : 9;

  std::size_t total = 0;
  for (std::size_t s = 1; s <= cfg.stages; ++s) {
    const std::size_t cin = s == 1 ? 1 : cfg.channels(s - 1), c = cfg.channels(s);
    total += conv(cin, c, kvol) + bn(c) + (is3d ? 1 : cfg.encoder2d_blocks) * block(c, kvol);
    if (is3d) total += cfg.ffo_depthwise ? c * cfg.window + c : conv(c, c, cfg.window);
  }
  for (std::size_t s = 1; s < cfg.stages; ++s) {
    const std::size_t c = cfg.channels(s);
    total += conv(cfg.channels(s + 1), c, 1) + block(c, 9);
    if (cfg.attention) total += conv(2 * c, c, 1) + conv(c, c, 1);
  }
  return total + conv(cfg.channels(1), 1, 1);
}

template <typename S>
SvsNet<S>::SvsNet(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const CounterRng init = CounterRng(seed).split("init");
  const bool is3d = config_.encoder == EncoderKind::conv3d;
  const Dims dims = is3d ? Dims::three : Dims::two;

  for (std::size_t s = 1; s <= config_.stages; ++s) {
    const std::size_t cin = s == 1 ? 1 : config_.channels(s - 1), c = config_.channels(s);
    const std::size_t stride = s == 1 ? 1 : 2;
    const std::string name = stage_name("enc", s);
    EncoderStage st;
    st.conv = ConvLayer<S>(store_, name + ".conv", cin, c, {3, 3, 3}, ConvSpec{{1, stride, stride}, {1, 1, 1}},
                           dims, init);
    st.bn = BatchNormLayer<S>(store_, name + ".bn", c);
    if (is3d) {
      st.blocks.emplace_back(store_, name + ".block", c, c, dims, init);
    } else {
      for (std::size_t b = 0; b < config_.encoder2d_blocks; ++b) {
        st.blocks.emplace_back(store_, name + ".block" + std::to_string(b), c, c, dims, init);
      }
    }
    encoder_.push_back(std::move(st));
    if (is3d) fusion_.emplace_back(store_, stage_name("ffo", s), c, config_.window, config_.ffo_depthwise, init);
  }
  for (std::size_t s = 1; s < config_.stages; ++s) {
    const std::size_t c = config_.channels(s);
    const std::string name = stage_name("dec", s);
    DecoderStage d;
    d.align = ConvLayer<S>(store_, name + ".align", config_.channels(s + 1), c, {1, 1, 1}, ConvSpec{}, Dims::two,
                           init);
    if (config_.attention) d.cab.emplace(store_, name + ".cab", c, init);
    d.block = ResidualBlock<S>(store_, name + ".block", c, c, Dims::two, init);
    decoder_.push_back(std::move(d));
  }
  head_ = ConvLayer<S>(store_, "head", config_.channels(1), 1, {1, 1, 1}, ConvSpec{}, Dims::two, init);
}

template <typename S>
BasicTensor<S> SvsNet<S>::forward(const BasicTensor<S>& batch, Mode mode, CounterRng* rng) {
  const auto& cfg = config_;
  if (batch.rank() != 4 || batch.dim(1) != cfg.window || batch.dim(2) != cfg.height || batch.dim(3) != cfg.width) {
    throw ShapeError("network expects [N," + std::to_string(cfg.window) + "," + std::to_string(cfg.height) + "," +
                     std::to_string(cfg.width) + "] input, got " + batch.shape().str());
  }
  const std::size_t n = batch.dim(0), hw = cfg.height * cfg.width;
  const bool is3d = cfg.encoder == EncoderKind::conv3d;
  const bool dropout = mode == Mode::train && cfg.dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw std::invalid_argument("train-mode forward with dropout needs an rng");

  BasicTensor<S> h;
  if (is3d) {
    h = batch.reshaped(TensorShape{n, 1, cfg.window, cfg.height, cfg.width});
  } else {
    h = BasicTensor<S>(TensorShape{n, 1, cfg.height, cfg.width});
    const std::size_t t = cfg.target_index();
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(batch.data().begin() + static_cast<std::ptrdiff_t>((b * cfg.window + t) * hw), hw,
                  h.data().begin() + static_cast<std::ptrdiff_t>(b * hw));
    }
  }

  shapes_ = {};
  std::vector<BasicTensor<S>> fused(cfg.stages);
  for (std::size_t s = 1; s <= cfg.stages; ++s) {
    EncoderStage& st = encoder_[s - 1];
    st.dropout.reset();
    if (dropout && s >= cfg.first_dropout_stage()) {
      DropoutMask<S> mask;
      h = spatial_dropout(h, cfg.dropout_rate, mode, *rng, &mask);
      st.dropout = std::move(mask);
    }
    h = st.bn.forward(st.conv.forward(h), mode);
    st.activated = activation(Activation::relu, h);
    h = st.activated;
    for (auto& block : st.blocks) h = block.forward(h, mode);
    {
      auto dims = h.shape().dims();
      dims.erase(dims.begin());
      shapes_.encoder.emplace_back(dims);
    }
    fused[s - 1] = is3d ? fusion_[s - 1].forward(h) : h;
    shapes_.fused.push_back(TensorShape{fused[s - 1].dim(1), fused[s - 1].dim(2), fused[s - 1].dim(3)});
  }

  BasicTensor<S> d = fused[cfg.stages - 1];
  for (std::size_t s = cfg.stages - 1; s >= 1; --s) {
    DecoderStage& dec = decoder_[s - 1];
    dec.upsample_input = d.shape();
    auto u = dec.align.forward(bilinear_upsample2x(d));
    auto z = dec.cab ? dec.cab->forward(fused[s - 1], u) : ew_binary(BinaryOp::add, fused[s - 1], u);
    d = dec.block.forward(z, mode);
  }

  logits_ = head_.forward(d);
  probs_ = BasicTensor<S>(logits_.shape());
  for (std::size_t i = 0; i < logits_.numel(); ++i) {
    const S z = std::clamp(logits_[i], static_cast<S>(-kLogitLimit), static_cast<S>(kLogitLimit));
    probs_[i] = sigmoid(z);
  }
  shapes_.output = TensorShape{1, cfg.height, cfg.width};
  pending_backward_ = true;
  return probs_;
}

template <typename S>
BasicTensor<S> SvsNet<S>::forward(const FrameWindow& window, Mode mode, CounterRng* rng) {
  const auto& f = window.frames;
  if (f.rank() != 3) throw ShapeError("frame window must be [T,H,W], got " + f.shape().str());
  if (window.target_index != config_.target_index()) {
    throw ShapeError("frame window target index " + std::to_string(window.target_index) + " does not match " +
                     std::to_string(config_.target_index()));
  }
  BasicTensor<S> batch = f.template cast<S>().reshaped(TensorShape{1, f.dim(0), f.dim(1), f.dim(2)});
  auto p = forward(batch, mode, rng);
  return std::move(p).reshaped(TensorShape{1, config_.height, config_.width});
}

template <typename S>
void SvsNet<S>::backward(const BasicTensor<S>& grad_out) {
  if (!pending_backward_) throw std::logic_error("backward called without a matching forward");
  if (grad_out.numel() != probs_.numel()) {
    throw ShapeError("upstream gradient " + grad_out.shape().str() + " does not match output " +
                     probs_.shape().str());
  }
  const auto& cfg = config_;
  const bool is3d = cfg.encoder == EncoderKind::conv3d;

  BasicTensor<S> dlogits(logits_.shape());
  for (std::size_t i = 0; i < dlogits.numel(); ++i) {
    const S p = probs_[i];
    const bool clamped = std::abs(logits_[i]) > static_cast<S>(kLogitLimit);
    dlogits[i] = clamped ? S{0} : grad_out[i] * p * (S{1} - p);
  }
  BasicTensor<S> dd = head_.backward(dlogits);

  std::vector<BasicTensor<S>> dfused(cfg.stages);
  auto add_into = [](BasicTensor<S>& acc, BasicTensor<S>&& g) {
    if (!acc.defined()) {
      acc = std::move(g);
    } else {
      for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
    }
  };
  for (std::size_t s = 1; s < cfg.stages; ++s) {
    DecoderStage& dec = decoder_[s - 1];
    auto dz = dec.block.backward(dd);
    BasicTensor<S> du;
    if (dec.cab) {
      auto [dl, dh] = dec.cab->backward(dz);
      add_into(dfused[s - 1], std::move(dl));
      du = std::move(dh);
    } else {
      add_into(dfused[s - 1], BasicTensor<S>(dz));
      du = std::move(dz);
    }
    dd = bilinear_upsample2x_backward(dec.upsample_input, dec.align.backward(du));
  }
  add_into(dfused[cfg.stages - 1], std::move(dd));

  BasicTensor<S> from_next;
  for (std::size_t s = cfg.stages; s >= 1; --s) {
    EncoderStage& st = encoder_[s - 1];
    BasicTensor<S> g = is3d ? fusion_[s - 1].backward(dfused[s - 1]) : std::move(dfused[s - 1]);
    if (from_next.defined()) add_into(g, std::move(from_next));
    for (auto it = st.blocks.rbegin(); it != st.blocks.rend(); ++it) g = it->backward(g);
    g = st.bn.backward(activation_backward(Activation::relu, st.activated, g));
    from_next = st.conv.backward(g, s > 1);
    if (s > 1 && st.dropout) from_next = spatial_dropout_backward(*st.dropout, from_next);
    st.activated = {};
  }
  pending_backward_ = false;
}

template <typename S>
std::vector<BasicTensor<S>> SvsNet<S>::attention_weights() const {
  std::vector<BasicTensor<S>> out;
  for (std::size_t s = config_.stages - 1; s >= 1; --s) {
    if (decoder_[s - 1].cab) out.push_back(decoder_[s - 1].cab->weights());
  }
  return out;
}

Tensor stack_windows(const std::vector<const FrameWindow*>& windows) {
  if (windows.empty()) throw std::invalid_argument("cannot stack an empty batch");
  const TensorShape& s = windows.front()->frames.shape();
  std::vector<float> data;
  data.reserve(windows.size() * s.numel());
  for (const FrameWindow* w : windows) {
    if (w->frames.shape() != s) throw ShapeError("batch windows differ in shape");
    data.insert(data.end(), w->frames.data().begin(), w->frames.data().end());
  }
  return Tensor::from(TensorShape{windows.size(), s[0], s[1], s[2]}, std::move(data));
}

template class SvsNet<float>;
template class SvsNet<double>;

}  // namespace seqvessel
