#include <algorithm>
#include <cmath>

#include "seqvessel/ops.hpp"

namespace seqvessel {

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Output o samples input coordinate (o + 0.5) / 2 - 0.5, clamped to the edge.
std::vector<Tap> taps2x(std::size_t in) {
  std::vector<Tap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * 0.5 - 0.5);
    const auto lo = std::min(static_cast<std::size_t>(src), in - 1);
    taps[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename S>
BasicTensor<S> bilinear_upsample2x(const BasicTensor<S>& input) {
  if (input.rank() != 4) throw ShapeError("bilinear_upsample2x expects [N,C,H,W], got " + input.shape().str());
  const std::size_t nc = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ty = taps2x(h), tx = taps2x(w);
  BasicTensor<S> out(TensorShape{input.dim(0), input.dim(1), 2 * h, 2 * w});
  for (std::size_t k = 0; k < nc; ++k) {
    const S* x = input.data().data() + k * h * w;
    S* y = out.data().data() + k * 4 * h * w;
    for (std::size_t oy = 0; oy < 2 * h; ++oy) {
      const Tap& a = ty[oy];
      const S ly = static_cast<S>(a.frac);
      const S* r0 = x + a.lo * w;
      const S* r1 = x + a.hi * w;
      for (std::size_t ox = 0; ox < 2 * w; ++ox) {
        const Tap& b = tx[ox];
        const S lx = static_cast<S>(b.frac);
        // Lerp form keeps constant regions exactly constant.
        const S top = r0[b.lo] + lx * (r0[b.hi] - r0[b.lo]);
        const S bot = r1[b.lo] + lx * (r1[b.hi] - r1[b.lo]);
        y[oy * 2 * w + ox] = top + ly * (bot - top);
      }
    }
  }
  return out;
}

template <typename S>
BasicTensor<S> bilinear_upsample2x_backward(const TensorShape& input_shape, const BasicTensor<S>& grad_out) {
  if (input_shape.rank() != 4) throw ShapeError("bilinear_upsample2x_backward expects rank-4 input shape");
  const std::size_t nc = input_shape[0] * input_shape[1], h = input_shape[2], w = input_shape[3];
  if (grad_out.numel() != 4 * nc * h * w) throw ShapeError("bilinear_upsample2x grad has wrong size");
  const auto ty = taps2x(h), tx = taps2x(w);
  BasicTensor<S> g(input_shape);
  for (std::size_t k = 0; k < nc; ++k) {
    S* dx = g.data().data() + k * h * w;
    const S* dy = grad_out.data().data() + k * 4 * h * w;
    for (std::size_t oy = 0; oy < 2 * h; ++oy) {
      const Tap& a = ty[oy];
      const S ly = static_cast<S>(a.frac);
      S* r0 = dx + a.lo * w;
      S* r1 = dx + a.hi * w;
      for (std::size_t ox = 0; ox < 2 * w; ++ox) {
        const Tap& b = tx[ox];
        const S lx = static_cast<S>(b.frac);
        const S v = dy[oy * 2 * w + ox];
        const S top = v * (S{1} - ly), bot = v * ly;
        r0[b.lo] += top * (S{1} - lx);
        r0[b.hi] += top * lx;
        r1[b.lo] += bot * (S{1} - lx);
        r1[b.hi] += bot * lx;
      }
    }
  }
  return g;
}

template BasicTensor<float> bilinear_upsample2x(const BasicTensor<float>&);
template BasicTensor<double> bilinear_upsample2x(const BasicTensor<double>&);
template BasicTensor<float> bilinear_upsample2x_backward(const TensorShape&, const BasicTensor<float>&);
template BasicTensor<double> bilinear_upsample2x_backward(const TensorShape&, const BasicTensor<double>&);

}  // namespace seqvessel
