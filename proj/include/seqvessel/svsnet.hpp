#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqvessel/layers.hpp"
#include "seqvessel/params.hpp"

namespace seqvessel {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class EncoderKind { conv3d, conv2d };

struct NetworkConfig {
  std::size_t stages = 7;
  std::size_t base_channels = 8;
  std::size_t window = 4;
  std::size_t height = 512;
  std::size_t width = 512;
  double dropout_rate = 0.5;
  std::size_t channel_cap = 512;
  EncoderKind encoder = EncoderKind::conv3d;
  bool attention = true;
  bool ffo_depthwise = false;
  // Residual blocks per stage for the 2d encoder ablation; extra depth keeps
  // its parameter count comparable to the 3d encoder.
  std::size_t encoder2d_blocks = 3;

  /// Channels at 1-based stage s: min(base * 2^(s-1), cap).
  std::size_t channels(std::size_t stage) const;
  /// Position of the predicted frame in the window; 2 for the 4-frame window
  /// (F[i-2], F[i-1], F[i], F[i+1]).
  std::size_t target_index() const { return window >= 2 ? window - 2 : 0; }
  /// First stage receiving spatial dropout on its input (the last two stages,
  /// never the raw image).
  std::size_t first_dropout_stage() const { return stages >= 3 ? stages - 1 : 2; }
  void validate() const;
};

/// Learnable scalar count (conv weights + biases, BN gamma + beta).
std::size_t param_count(const NetworkConfig& config);

/// T frames of one sequence with intensities in [0,1].
struct FrameWindow {
  Tensor frames;  // [T,H,W]
  std::size_t target_index = 2;
};

/// Per-stage shapes from the most recent forward, batch axis removed.
struct ForwardShapes {
  std::vector<TensorShape> encoder;  // [C,T,H,W] (or [C,H,W] for the 2d encoder)
  std::vector<TensorShape> fused;    // [C,H,W]
  TensorShape output;                // [1,H,W]
};

/// The sequential segmentation network: a residual encoder (3d by default),
/// temporal fusion on every skip and on the bottleneck, an upsampling decoder
/// with channel attention, and a 1x1 conv + sigmoid head.
template <typename S>
class SvsNet {
 public:
  SvsNet(NetworkConfig config, std::uint64_t seed);
  SvsNet(const SvsNet&) = delete;
  SvsNet& operator=(const SvsNet&) = delete;

  /// `batch` is [N,T,H,W]; returns probabilities [N,1,H,W]. Train mode uses
  /// batch statistics and draws dropout masks from `rng` (required when the
  /// dropout rate is non-zero).
  BasicTensor<S> forward(const BasicTensor<S>& batch, Mode mode, CounterRng* rng = nullptr);
  /// Single window convenience; returns [1,H,W].
  BasicTensor<S> forward(const FrameWindow& window, Mode mode, CounterRng* rng = nullptr);

  /// Accumulates d(loss)/d(param) into the store's grad slots given
  /// d(loss)/d(probabilities) for the last forward.
  void backward(const BasicTensor<S>& grad_out);

  const NetworkConfig& config() const { return config_; }
  ParameterStore<S>& store() { return store_; }
  const ParameterStore<S>& store() const { return store_; }
  const ForwardShapes& shapes() const { return shapes_; }

  /// CAB attention vectors [N,C,1,1] of the last forward, decoder stage
  /// order S-1..1 (empty when attention is disabled).
  std::vector<BasicTensor<S>> attention_weights() const;

 private:
  struct EncoderStage {
    std::optional<DropoutMask<S>> dropout;
    ConvLayer<S> conv;
    BatchNormLayer<S> bn;
    std::vector<ResidualBlock<S>> blocks;
    BasicTensor<S> activated;
  };
  struct DecoderStage {
    ConvLayer<S> align;
    std::optional<ChannelAttention<S>> cab;
    ResidualBlock<S> block;
    TensorShape upsample_input;
  };

  NetworkConfig config_;
  ParameterStore<S> store_;
  std::vector<EncoderStage> encoder_;
  std::vector<FeatureFusion<S>> fusion_;
  std::vector<DecoderStage> decoder_;  // index 0 is stage 1
  ConvLayer<S> head_;
  BasicTensor<S> logits_, probs_;
  ForwardShapes shapes_;
  bool pending_backward_ = false;
};

/// Stacks windows into a [N,T,H,W] batch.
Tensor stack_windows(const std::vector<const FrameWindow*>& windows);

}  // namespace seqvessel
