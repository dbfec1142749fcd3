#pragma once

// Layer primitives with explicit forward and backward passes. All ops are
// pure: backward functions take whatever the matching forward produced
// (input, cache, or output) and return gradients rather than mutating state.

#include <array>
#include <cstddef>
#include <vector>

#include "seqvessel/rng.hpp"
#include "seqvessel/tensor.hpp"

namespace seqvessel {

enum class Mode { train, infer };

/// Stride and zero padding per (temporal, height, width) axis. conv2d reads
/// only the last two entries.
struct ConvSpec {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
};

template <typename S>
struct ConvParams {
  BasicTensor<S> weight;  // [Co, Ci, (kT,) kH, kW]
  BasicTensor<S> bias;    // [Co]
  ConvSpec spec;
};

template <typename S>
struct ConvGrads {
  BasicTensor<S> input;   // undefined when not requested
  BasicTensor<S> weight;
  BasicTensor<S> bias;
};

/// Output extent floor((in + 2 pad - k) / stride) + 1; throws if < 1.
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                            const char* axis);

// Cross-correlation (no kernel flip) plus bias.
template <typename S>
BasicTensor<S> conv3d(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                      const BasicTensor<S>& bias, const ConvSpec& spec);
template <typename S>
ConvGrads<S> conv3d_backward(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                             const BasicTensor<S>& grad_out, const ConvSpec& spec,
                             bool need_input_grad = true);

template <typename S>
BasicTensor<S> conv2d(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                      const BasicTensor<S>& bias, const ConvSpec& spec);
template <typename S>
ConvGrads<S> conv2d_backward(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                             const BasicTensor<S>& grad_out, const ConvSpec& spec,
                             bool need_input_grad = true);

template <typename S>
BasicTensor<S> conv3d(const BasicTensor<S>& input, const ConvParams<S>& p) {
  return conv3d(input, p.weight, p.bias, p.spec);
}
template <typename S>
BasicTensor<S> conv2d(const BasicTensor<S>& input, const ConvParams<S>& p) {
  return conv2d(input, p.weight, p.bias, p.spec);
}

// ---------------------------------------------------------------------------
// Batch normalization. Statistics are per channel (axis 1) over every other
// axis; inputs are [N,C,H,W] or [N,C,T,H,W].

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

template <typename S>
struct BatchNormState {
  BasicTensor<S> gamma, beta;
  BasicTensor<S> running_mean, running_var;  // undefined until initialized
  BatchNormOptions options;

  static BatchNormState identity(std::size_t channels);
};

template <typename S>
struct BatchNormCache {
  BasicTensor<S> normalized;       // x_hat
  std::vector<double> inv_std;     // per channel
  Mode mode = Mode::train;
};

template <typename S>
struct BatchNormGrads {
  BasicTensor<S> input, gamma, beta;
};

/// Train mode normalizes with batch statistics (biased variance) and folds
/// them into the running estimates; infer mode uses the running estimates.
template <typename S>
BasicTensor<S> batch_norm(const BasicTensor<S>& input, const BasicTensor<S>& gamma,
                          const BasicTensor<S>& beta, BasicTensor<S>& running_mean,
                          BasicTensor<S>& running_var, Mode mode, const BatchNormOptions& options,
                          BatchNormCache<S>* cache = nullptr);

template <typename S>
BasicTensor<S> batch_norm(const BasicTensor<S>& input, BatchNormState<S>& state, Mode mode,
                          BatchNormCache<S>* cache = nullptr) {
  return batch_norm(input, state.gamma, state.beta, state.running_mean, state.running_var, mode,
                    state.options, cache);
}

template <typename S>
BatchNormGrads<S> batch_norm_backward(const BatchNormCache<S>& cache, const BasicTensor<S>& gamma,
                                      const BasicTensor<S>& grad_out);

// ---------------------------------------------------------------------------

enum class Activation { relu, sigmoid };

template <typename S>
BasicTensor<S> activation(Activation kind, const BasicTensor<S>& input);

/// Gradient given the forward *output*. relu'(0) is taken as 0.
template <typename S>
BasicTensor<S> activation_backward(Activation kind, const BasicTensor<S>& output,
                                   const BasicTensor<S>& grad_out);

template <typename S>
S sigmoid(S x);

template <typename S>
BasicTensor<S> global_avg_pool(const BasicTensor<S>& input);  // [N,C,H,W] -> [N,C,1,1]
template <typename S>
BasicTensor<S> global_avg_pool_backward(const TensorShape& input_shape,
                                        const BasicTensor<S>& grad_out);

/// 2x bilinear upsampling with half-pixel centers and edge clamping.
template <typename S>
BasicTensor<S> bilinear_upsample2x(const BasicTensor<S>& input);
template <typename S>
BasicTensor<S> bilinear_upsample2x_backward(const TensorShape& input_shape,
                                            const BasicTensor<S>& grad_out);

/// Per-(sample, channel) keep mask: 0 or 1/(1-rate).
template <typename S>
struct DropoutMask {
  std::vector<S> scale;
  std::size_t inner = 0;  // elements per channel
};

/// Inverted spatial dropout: whole channels are zeroed with probability
/// `rate`. Draws come only from `rng` (one per channel, in (n, c) order).
template <typename S>
BasicTensor<S> spatial_dropout(const BasicTensor<S>& input, double rate, Mode mode,
                               CounterRng& rng, DropoutMask<S>* mask = nullptr);
template <typename S>
BasicTensor<S> spatial_dropout_backward(const DropoutMask<S>& mask, const BasicTensor<S>& grad_out);

/// Channel (axis 1) concatenation; all other axes must agree.
template <typename S>
BasicTensor<S> concat_channels(const BasicTensor<S>& a, const BasicTensor<S>& b);
template <typename S>
std::pair<BasicTensor<S>, BasicTensor<S>> split_channels(const BasicTensor<S>& t,
                                                         std::size_t first_channels);

}  // namespace seqvessel
