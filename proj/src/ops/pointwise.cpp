#include <algorithm>
#include <cmath>

#include "seqvessel/ops.hpp"

namespace seqvessel {

template <typename S>
S sigmoid(S x) {
  // Branch on sign so exp never overflows.
  if (x >= S{0}) return S{1} / (S{1} + std::exp(-x));
  const S e = std::exp(x);
  return e / (S{1} + e);
}

template <typename S>
BasicTensor<S> activation(Activation kind, const BasicTensor<S>& input) {
  BasicTensor<S> out(input.shape());
  auto x = input.data();
  auto y = out.data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > S{0} ? x[i] : S{0};
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  }
  return out;
}

template <typename S>
BasicTensor<S> activation_backward(Activation kind, const BasicTensor<S>& output,
                                   const BasicTensor<S>& grad_out) {
  if (output.shape() != grad_out.shape()) {
    throw ShapeError("activation grad " + grad_out.shape().str() + " vs output " + output.shape().str());
  }
  BasicTensor<S> g(output.shape());
  auto y = output.data();
  auto dy = grad_out.data();
  auto dx = g.data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > S{0} ? dy[i] : S{0};
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (S{1} - y[i]);
  }
  return g;
}

template <typename S>
BasicTensor<S> global_avg_pool(const BasicTensor<S>& input) {
  if (input.rank() != 4) throw ShapeError("global_avg_pool expects [N,C,H,W], got " + input.shape().str());
  const std::size_t nc = input.dim(0) * input.dim(1), hw = input.dim(2) * input.dim(3);
  BasicTensor<S> out(TensorShape{input.dim(0), input.dim(1), 1, 1});
  auto x = input.data();
  for (std::size_t k = 0; k < nc; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += x[k * hw + i];
    out[k] = static_cast<S>(acc / static_cast<double>(hw));
  }
  return out;
}

template <typename S>
BasicTensor<S> global_avg_pool_backward(const TensorShape& input_shape, const BasicTensor<S>& grad_out) {
  const std::size_t nc = input_shape[0] * input_shape[1], hw = input_shape[2] * input_shape[3];
  if (grad_out.numel() != nc) throw ShapeError("global_avg_pool grad has wrong size");
  BasicTensor<S> g(input_shape);
  const S scale = S{1} / static_cast<S>(hw);
  for (std::size_t k = 0; k < nc; ++k) {
    std::fill_n(g.data().begin() + static_cast<std::ptrdiff_t>(k * hw), hw, grad_out[k] * scale);
  }
  return g;
}

template <typename S>
BasicTensor<S> spatial_dropout(const BasicTensor<S>& input, double rate, Mode mode, CounterRng& rng,
                               DropoutMask<S>* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (input.rank() < 2) throw ShapeError("spatial_dropout expects [N,C,...]");
  const std::size_t nc = input.dim(0) * input.dim(1);
  const std::size_t inner = input.numel() / nc;
  DropoutMask<S> m;
  m.inner = inner;
  m.scale.assign(nc, S{1});
  if (mode == Mode::train && rate > 0.0) {
    const S keep = static_cast<S>(1.0 / (1.0 - rate));
    for (std::size_t k = 0; k < nc; ++k) m.scale[k] = rng.bernoulli(rate) ? S{0} : keep;
  }
  BasicTensor<S> out = input;
  if (mode == Mode::train && rate > 0.0) {
    auto y = out.data();
    for (std::size_t k = 0; k < nc; ++k) {
      for (std::size_t i = 0; i < inner; ++i) y[k * inner + i] *= m.scale[k];
    }
  }
  if (mask) *mask = std::move(m);
  return out;
}

template <typename S>
BasicTensor<S> spatial_dropout_backward(const DropoutMask<S>& mask, const BasicTensor<S>& grad_out) {
  if (mask.scale.size() * mask.inner != grad_out.numel()) {
    throw ShapeError("dropout mask does not match gradient " + grad_out.shape().str());
  }
  BasicTensor<S> g = grad_out;
  auto d = g.data();
  for (std::size_t k = 0; k < mask.scale.size(); ++k) {
    for (std::size_t i = 0; i < mask.inner; ++i) d[k * mask.inner + i] *= mask.scale[k];
  }
  return g;
}

template <typename S>
BasicTensor<S> concat_channels(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  if (!a.defined() || !b.defined() || a.rank() < 2 || a.rank() != b.rank()) {
    throw ShapeError("concat_channels needs two defined tensors of equal rank >= 2");
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != 1 && a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_channels mismatch on axis " + std::to_string(i) + ": " + a.shape().str() +
                       " vs " + b.shape().str());
    }
  }
  auto dims = a.shape().dims();
  dims[1] = a.dim(1) + b.dim(1);
  BasicTensor<S> out{TensorShape(dims)};
  const std::size_t inner = a.numel() / (a.dim(0) * a.dim(1));
  const std::size_t ca = a.dim(1) * inner, cb = b.dim(1) * inner;
  for (std::size_t n = 0; n < a.dim(0); ++n) {
    auto dst = out.data().begin() + static_cast<std::ptrdiff_t>(n * (ca + cb));
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(n * ca), ca, dst);
    std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(n * cb), cb, dst + static_cast<std::ptrdiff_t>(ca));
  }
  return out;
}

template <typename S>
std::pair<BasicTensor<S>, BasicTensor<S>> split_channels(const BasicTensor<S>& t, std::size_t first) {
  if (t.rank() < 2 || first == 0 || first >= t.dim(1)) {
    throw ShapeError("split_channels: cannot split " + t.shape().str() + " at channel " + std::to_string(first));
  }
  auto da = t.shape().dims(), db = da;
  da[1] = first;
  db[1] = t.dim(1) - first;
  BasicTensor<S> a{TensorShape(da)}, b{TensorShape(db)};
  const std::size_t inner = t.numel() / (t.dim(0) * t.dim(1));
  const std::size_t ca = da[1] * inner, cb = db[1] * inner;
  for (std::size_t n = 0; n < t.dim(0); ++n) {
    auto src = t.data().begin() + static_cast<std::ptrdiff_t>(n * (ca + cb));
    std::copy_n(src, ca, a.data().begin() + static_cast<std::ptrdiff_t>(n * ca));
    std::copy_n(src + static_cast<std::ptrdiff_t>(ca), cb, b.data().begin() + static_cast<std::ptrdiff_t>(n * cb));
  }
  return {std::move(a), std::move(b)};
}

#define SEQVESSEL_INSTANTIATE(S)                                                                         \
  template S sigmoid(S);                                                                                 \
  template BasicTensor<S> activation(Activation, const BasicTensor<S>&);                                 \
  template BasicTensor<S> activation_backward(Activation, const BasicTensor<S>&, const BasicTensor<S>&); \
  template BasicTensor<S> global_avg_pool(const BasicTensor<S>&);                                        \
  template BasicTensor<S> global_avg_pool_backward(const TensorShape&, const BasicTensor<S>&);           \
  template BasicTensor<S> spatial_dropout(const BasicTensor<S>&, double, Mode, CounterRng&,              \
                                          DropoutMask<S>*);                                              \
  template BasicTensor<S> spatial_dropout_backward(const DropoutMask<S>&, const BasicTensor<S>&);        \
  template BasicTensor<S> concat_channels(const BasicTensor<S>&, const BasicTensor<S>&);                 \
  template std::pair<BasicTensor<S>, BasicTensor<S>> split_channels(const BasicTensor<S>&, std::size_t);

SEQVESSEL_INSTANTIATE(float)
SEQVESSEL_INSTANTIATE(double)

#undef SEQVESSEL_INSTANTIATE

}  // namespace seqvessel
