#include "seqvessel/layers.hpp"

#include <cmath>

namespace seqvessel {

namespace {

template <typename S>
void accumulate(BasicTensor<S>& into, const BasicTensor<S>& delta) {
  auto a = into.data();
  auto d = delta.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += d[i];
}

template <typename S>
BasicTensor<S> plus(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return ew_binary(BinaryOp::add, a, b);
}

template <typename S>
void require_forward(const BasicTensor<S>& cached, const char* layer) {
  if (!cached.defined()) throw std::logic_error(std::string(layer) + ": backward called without forward");
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename S>
ConvLayer<S>::ConvLayer(ParameterStore<S>& store, const std::string& name, std::size_t in_channels,
                        std::size_t out_channels, std::array<std::size_t, 3> kernel, ConvSpec spec,
                        Dims dims, const CounterRng& init)
    : spec_(spec), dims_(dims) {
  TensorShape wshape = dims == Dims::three
                           ? TensorShape{out_channels, in_channels, kernel[0], kernel[1], kernel[2]}
                           : TensorShape{out_channels, in_channels, kernel[1], kernel[2]};
  const std::size_t fan_in = wshape.numel() / out_channels;
  BasicTensor<S> w(wshape);
  CounterRng rng = init.split(name + ".weight");
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = static_cast<S>(std_dev * rng.normal());
  weight_ = &store.add(name + ".weight", std::move(w));
  bias_ = &store.add(name + ".bias", BasicTensor<S>(TensorShape{out_channels}));
}

template <typename S>
BasicTensor<S> ConvLayer<S>::forward(const BasicTensor<S>& x) {
  input_ = x;
  return dims_ == Dims::three ? conv3d(x, weight_->value, bias_->value, spec_)
                              : conv2d(x, weight_->value, bias_->value, spec_);
}

template <typename S>
BasicTensor<S> ConvLayer<S>::backward(const BasicTensor<S>& grad_out, bool need_input_grad) {
  require_forward(input_, "conv");
  auto g = dims_ == Dims::three ? conv3d_backward(input_, weight_->value, grad_out, spec_, need_input_grad)
                                : conv2d_backward(input_, weight_->value, grad_out, spec_, need_input_grad);
  accumulate(weight_->grad, g.weight);
  accumulate(bias_->grad, g.bias);
  input_ = {};
  return std::move(g.input);
}

// ---------------------------------------------------------------------------

template <typename S>
BatchNormLayer<S>::BatchNormLayer(ParameterStore<S>& store, const std::string& name, std::size_t channels,
                                  BatchNormOptions options)
    : options_(options) {
  gamma_ = &store.add(name + ".gamma", BasicTensor<S>(TensorShape{channels}, S{1}));
  beta_ = &store.add(name + ".beta", BasicTensor<S>(TensorShape{channels}, S{0}));
  running_mean_ = &store.add_buffer(name + ".running_mean", BasicTensor<S>(TensorShape{channels}, S{0}));
  running_var_ = &store.add_buffer(name + ".running_var", BasicTensor<S>(TensorShape{channels}, S{1}));
}

template <typename S>
BasicTensor<S> BatchNormLayer<S>::forward(const BasicTensor<S>& x, Mode mode) {
  return batch_norm(x, gamma_->value, beta_->value, *running_mean_, *running_var_, mode, options_, &cache_);
}

template <typename S>
BasicTensor<S> BatchNormLayer<S>::backward(const BasicTensor<S>& grad_out) {
  require_forward(cache_.normalized, "batch_norm");
  auto g = batch_norm_backward(cache_, gamma_->value, grad_out);
  accumulate(gamma_->grad, g.gamma);
  accumulate(beta_->grad, g.beta);
  cache_ = {};
  return std::move(g.input);
}

// ---------------------------------------------------------------------------

template <typename S>
ResidualBlock<S>::ResidualBlock(ParameterStore<S>& store, const std::string& name, std::size_t in_channels,
                                std::size_t out_channels, Dims dims, const CounterRng& init) {
  const ConvSpec same{{1, 1, 1}, {1, 1, 1}};
  conv1_ = ConvLayer<S>(store, name + ".conv1", in_channels, out_channels, {3, 3, 3}, same, dims, init);
  bn1_ = BatchNormLayer<S>(store, name + ".bn1", out_channels);
  conv2_ = ConvLayer<S>(store, name + ".conv2", out_channels, out_channels, {3, 3, 3}, same, dims, init);
  bn2_ = BatchNormLayer<S>(store, name + ".bn2", out_channels);
  if (in_channels != out_channels) {
    proj_.emplace(store, name + ".proj", in_channels, out_channels, std::array<std::size_t, 3>{1, 1, 1},
                  ConvSpec{}, dims, init);
  }
}

template <typename S>
BasicTensor<S> ResidualBlock<S>::forward(const BasicTensor<S>& x, Mode mode) {
  mid_ = activation(Activation::relu, bn1_.forward(conv1_.forward(x), mode));
  auto branch = bn2_.forward(conv2_.forward(mid_), mode);
  auto sum = plus(branch, proj_ ? proj_->forward(x) : x);
  out_ = activation(Activation::relu, sum);
  return out_;
}

template <typename S>
BasicTensor<S> ResidualBlock<S>::backward(const BasicTensor<S>& grad_out) {
  require_forward(out_, "residual_block");
  auto g = activation_backward(Activation::relu, out_, grad_out);
  auto branch = conv2_.backward(bn2_.backward(g));
  branch = activation_backward(Activation::relu, mid_, branch);
  auto dx = conv1_.backward(bn1_.backward(branch));
  accumulate(dx, proj_ ? proj_->backward(g) : g);
  mid_ = {};
  out_ = {};
  return dx;
}

// ---------------------------------------------------------------------------

template <typename S>
FeatureFusion<S>::FeatureFusion(ParameterStore<S>& store, const std::string& name, std::size_t channels,
                                std::size_t window, bool depthwise, const CounterRng& init)
    : window_(window), depthwise_(depthwise) {
  const TensorShape wshape{channels, depthwise ? 1 : channels, window, 1, 1};
  BasicTensor<S> w(wshape);
  CounterRng rng = init.split(name + ".weight");
  const double std_dev = std::sqrt(2.0 / static_cast<double>(wshape.numel() / channels));
  for (auto& v : w.data()) v = static_cast<S>(std_dev * rng.normal());
  weight_ = &store.add(name + ".weight", std::move(w));
  bias_ = &store.add(name + ".bias", BasicTensor<S>(TensorShape{channels}));
}

template <typename S>
BasicTensor<S> FeatureFusion<S>::forward(const BasicTensor<S>& x) {
  if (x.rank() != 5) throw ShapeError("ffo expects [N,C,T,H,W], got " + x.shape().str());
  if (x.dim(2) != window_) {
    throw ShapeError("ffo temporal extent " + std::to_string(x.dim(2)) + " does not match kernel " +
                     std::to_string(window_));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(3), w = x.dim(4);
  if (c != weight_->value.dim(0)) throw ShapeError("ffo channel mismatch for " + x.shape().str());
  input_ = x;
  if (!depthwise_) {
    auto y = conv3d(x, weight_->value, bias_->value, ConvSpec{});
    return std::move(y).reshaped(TensorShape{n, c, h, w});
  }
  BasicTensor<S> y(TensorShape{n, c, h, w});
  const std::size_t hw = h * w;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      S* out = y.data().data() + (b * c + ch) * hw;
      std::fill(out, out + hw, bias_->value[ch]);
      for (std::size_t t = 0; t < window_; ++t) {
        const S k = weight_->value[ch * window_ + t];
        const S* in = x.data().data() + ((b * c + ch) * window_ + t) * hw;
        for (std::size_t i = 0; i < hw; ++i) out[i] += k * in[i];
      }
    }
  }
  return y;
}

template <typename S>
BasicTensor<S> FeatureFusion<S>::backward(const BasicTensor<S>& grad_out) {
  require_forward(input_, "ffo");
  const std::size_t n = input_.dim(0), c = input_.dim(1), h = input_.dim(3), w = input_.dim(4);
  BasicTensor<S> dx;
  if (!depthwise_) {
    auto g = conv3d_backward(input_, weight_->value, grad_out.reshaped(TensorShape{n, c, 1, h, w}), ConvSpec{});
    accumulate(weight_->grad, g.weight);
    accumulate(bias_->grad, g.bias);
    dx = std::move(g.input);
  } else {
    dx = BasicTensor<S>(input_.shape());
    const std::size_t hw = h * w;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const S* dy = grad_out.data().data() + (b * c + ch) * hw;
        S db{0};
        for (std::size_t i = 0; i < hw; ++i) db += dy[i];
        bias_->grad[ch] += db;
        for (std::size_t t = 0; t < window_; ++t) {
          const S k = weight_->value[ch * window_ + t];
          const std::size_t off = ((b * c + ch) * window_ + t) * hw;
          const S* in = input_.data().data() + off;
          S* d = dx.data().data() + off;
          S dw{0};
          for (std::size_t i = 0; i < hw; ++i) {
            dw += dy[i] * in[i];
            d[i] = k * dy[i];
          }
          weight_->grad[ch * window_ + t] += dw;
        }
      }
    }
  }
  input_ = {};
  return dx;
}

// ---------------------------------------------------------------------------

template <typename S>
ChannelAttention<S>::ChannelAttention(ParameterStore<S>& store, const std::string& name, std::size_t channels,
                                      const CounterRng& init) {
  fc1_ = ConvLayer<S>(store, name + ".fc1", 2 * channels, channels, {1, 1, 1}, ConvSpec{}, Dims::two, init);
  fc2_ = ConvLayer<S>(store, name + ".fc2", channels, channels, {1, 1, 1}, ConvSpec{}, Dims::two, init);
}

template <typename S>
BasicTensor<S> ChannelAttention<S>::forward(const BasicTensor<S>& low, const BasicTensor<S>& high) {
  if (low.shape() != high.shape() || low.rank() != 4) {
    throw ShapeError("cab expects equal [N,C,H,W] inputs, got " + low.shape().str() + " and " +
                     high.shape().str());
  }
  auto joined = concat_channels(low, high);
  concat_shape_ = joined.shape();
  auto pooled = global_avg_pool(joined);
  hidden_ = activation(Activation::relu, fc1_.forward(pooled));
  attention_ = activation(Activation::sigmoid, fc2_.forward(hidden_));
  low_ = low;
  return plus(ew_binary(BinaryOp::mul, low, attention_), high);
}

template <typename S>
std::pair<BasicTensor<S>, BasicTensor<S>> ChannelAttention<S>::backward(const BasicTensor<S>& grad_out) {
  require_forward(low_, "cab");
  const std::size_t nc = attention_.numel();
  const std::size_t hw = low_.numel() / nc;
  BasicTensor<S> dlow = ew_binary(BinaryOp::mul, grad_out, attention_);
  BasicTensor<S> dattn(attention_.shape());
  for (std::size_t k = 0; k < nc; ++k) {
    S acc{0};
    const S* dy = grad_out.data().data() + k * hw;
    const S* x = low_.data().data() + k * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += dy[i] * x[i];
    dattn[k] = acc;
  }
  auto dz2 = activation_backward(Activation::sigmoid, attention_, dattn);
  auto dh = activation_backward(Activation::relu, hidden_, fc2_.backward(dz2));
  auto dpool = fc1_.backward(dh);
  auto [dlow_gap, dhigh_gap] = split_channels(global_avg_pool_backward(concat_shape_, dpool), low_.dim(1));
  accumulate(dlow, dlow_gap);
  BasicTensor<S> dhigh = plus(grad_out, dhigh_gap);
  low_ = {};
  return {std::move(dlow), std::move(dhigh)};
}

template class ConvLayer<float>;
template class ConvLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class FeatureFusion<float>;
template class FeatureFusion<double>;
template class ChannelAttention<float>;
template class ChannelAttention<double>;

}  // namespace seqvessel
