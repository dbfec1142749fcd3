#pragma once

// Stateful layers wired to a ParameterStore. Each forward caches what its
// backward needs; backward accumulates parameter gradients into the store
// and returns the input gradient.

#include <array>
#include <optional>
#include <string>
#include <utility>

#include "seqvessel/ops.hpp"
#include "seqvessel/params.hpp"
#include "seqvessel/rng.hpp"

namespace seqvessel {

enum class Dims { two, three };

template <typename S>
class ConvLayer {
 public:
  ConvLayer() = default;
  /// Registers `<name>.weight` (fan-in scaled normal, std sqrt(2/fan_in)) and
  /// `<name>.bias` (zero). `kernel` is (kT, kH, kW); kT is ignored for 2d.
  ConvLayer(ParameterStore<S>& store, const std::string& name, std::size_t in_channels,
            std::size_t out_channels, std::array<std::size_t, 3> kernel, ConvSpec spec, Dims dims,
            const CounterRng& init);

  BasicTensor<S> forward(const BasicTensor<S>& x);
  BasicTensor<S> backward(const BasicTensor<S>& grad_out, bool need_input_grad = true);

  Parameter<S>& weight() { return *weight_; }
  Parameter<S>& bias() { return *bias_; }

 private:
  Parameter<S>* weight_ = nullptr;
  Parameter<S>* bias_ = nullptr;
  ConvSpec spec_;
  Dims dims_ = Dims::two;
  BasicTensor<S> input_;
};

template <typename S>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParameterStore<S>& store, const std::string& name, std::size_t channels,
                 BatchNormOptions options = {});

  BasicTensor<S> forward(const BasicTensor<S>& x, Mode mode);
  BasicTensor<S> backward(const BasicTensor<S>& grad_out);

 private:
  Parameter<S>* gamma_ = nullptr;
  Parameter<S>* beta_ = nullptr;
  BasicTensor<S>* running_mean_ = nullptr;
  BasicTensor<S>* running_var_ = nullptr;
  BatchNormOptions options_;
  BatchNormCache<S> cache_;
};

/// out = ReLU(BN(Conv(ReLU(BN(Conv(x))))) + shortcut(x)), 3x3(x3) kernels,
/// stride 1, pad 1. The shortcut is the identity when channel counts match,
/// a 1x1(x1) convolution otherwise.
template <typename S>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterStore<S>& store, const std::string& name, std::size_t in_channels,
                std::size_t out_channels, Dims dims, const CounterRng& init);

  BasicTensor<S> forward(const BasicTensor<S>& x, Mode mode);
  BasicTensor<S> backward(const BasicTensor<S>& grad_out);

 private:
  ConvLayer<S> conv1_, conv2_;
  BatchNormLayer<S> bn1_, bn2_;
  std::optional<ConvLayer<S>> proj_;
  BasicTensor<S> mid_, out_;
};

/// Temporal fusion of skip features: a T x 1 x 1 convolution (no padding)
/// collapses [N,C,T,H,W] to [N,C,1,H,W], then the temporal axis is dropped.
/// The default mixes channels; `depthwise` restricts each output channel to
/// its own input channel.
template <typename S>
class FeatureFusion {
 public:
  FeatureFusion() = default;
  FeatureFusion(ParameterStore<S>& store, const std::string& name, std::size_t channels,
                std::size_t window, bool depthwise, const CounterRng& init);

  BasicTensor<S> forward(const BasicTensor<S>& x);
  BasicTensor<S> backward(const BasicTensor<S>& grad_out);

  Parameter<S>& weight() { return *weight_; }
  Parameter<S>& bias() { return *bias_; }

 private:
  Parameter<S>* weight_ = nullptr;
  Parameter<S>* bias_ = nullptr;
  std::size_t window_ = 0;
  bool depthwise_ = false;
  BasicTensor<S> input_;
};

/// Channel attention over a (low, high) pair of equal-shape [N,C,H,W] maps:
///   w   = sigmoid(fc2(ReLU(fc1(GAP(concat(low, high))))))   in (0,1)^C
///   out = w * low + high
/// fc1 maps 2C -> C and fc2 maps C -> C, both 1x1 convolutions with bias.
template <typename S>
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(ParameterStore<S>& store, const std::string& name, std::size_t channels,
                   const CounterRng& init);

  BasicTensor<S> forward(const BasicTensor<S>& low, const BasicTensor<S>& high);
  /// Returns (d low, d high).
  std::pair<BasicTensor<S>, BasicTensor<S>> backward(const BasicTensor<S>& grad_out);

  /// Attention vector [N,C,1,1] from the last forward.
  const BasicTensor<S>& weights() const { return attention_; }
  ConvLayer<S>& fc1() { return fc1_; }
  ConvLayer<S>& fc2() { return fc2_; }

 private:
  ConvLayer<S> fc1_, fc2_;
  BasicTensor<S> low_, hidden_, attention_;
  TensorShape concat_shape_;
};

}  // namespace seqvessel
