#include <algorithm>
#include <string>

#include "gemm.hpp"
#include "seqvessel/ops.hpp"

namespace seqvessel {

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                            const char* axis) {
  if (stride == 0) throw ShapeError(std::string("conv stride must be >= 1 on axis ") + axis);
  if (in + 2 * pad < k) {
    throw ShapeError(std::string("conv kernel larger than padded input on axis ") + axis);
  }
  return (in + 2 * pad - k) / stride + 1;
}

namespace {

struct Geometry {
  std::size_t n, ci, co;
  std::size_t d, h, w;        // input extents
  std::size_t kd, kh, kw;     // kernel extents
  std::size_t od, oh, ow;     // output extents
  ConvSpec spec;

  std::size_t k_rows() const { return ci * kd * kh * kw; }
  std::size_t in_plane() const { return d * h * w; }
  std::size_t out_plane() const { return od * oh * ow; }
  bool pointwise() const {
    return kd == 1 && kh == 1 && kw == 1 && spec.stride == std::array<std::size_t, 3>{1, 1, 1} &&
           spec.pad == std::array<std::size_t, 3>{0, 0, 0};
  }
};

template <typename S>
Geometry geometry(const BasicTensor<S>& input, const BasicTensor<S>& weight, const ConvSpec& spec) {
  if (input.rank() != 5) throw ShapeError("conv3d expects input [N,C,T,H,W], got " + input.shape().str());
  if (weight.rank() != 5) {
    throw ShapeError("conv3d expects weight [Co,Ci,kT,kH,kW], got " + weight.shape().str());
  }
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv channel mismatch on axis C: input " + input.shape().str() + " vs weight " +
                     weight.shape().str());
  }
  Geometry g{};
  g.n = input.dim(0);
  g.ci = input.dim(1);
  g.co = weight.dim(0);
  g.d = input.dim(2);
  g.h = input.dim(3);
  g.w = input.dim(4);
  g.kd = weight.dim(2);
  g.kh = weight.dim(3);
  g.kw = weight.dim(4);
  g.spec = spec;
  g.od = conv_out_extent(g.d, g.kd, spec.stride[0], spec.pad[0], "T");
  g.oh = conv_out_extent(g.h, g.kh, spec.stride[1], spec.pad[1], "H");
  g.ow = conv_out_extent(g.w, g.kw, spec.stride[2], spec.pad[2], "W");
  return g;
}

// cols[(c,kt,ky,kx), (ot,oy,ox)] = x[c, ot*st+kt-pt, oy*sh+ky-ph, ox*sw+kx-pw], zero outside.
template <typename S>
void im2col(const Geometry& g, const S* x, S* cols) {
  const auto [st, sh, sw] = g.spec.stride;
  const auto [pt, ph, pw] = g.spec.pad;
  S* row = cols;
  for (std::size_t c = 0; c < g.ci; ++c) {
    const S* xc = x + c * g.in_plane();
    for (std::size_t kt = 0; kt < g.kd; ++kt) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          S* out = row;
          for (std::size_t ot = 0; ot < g.od; ++ot) {
            const long it = static_cast<long>(ot * st + kt) - static_cast<long>(pt);
            if (it < 0 || it >= static_cast<long>(g.d)) {
              std::fill(out, out + g.oh * g.ow, S{0});
              out += g.oh * g.ow;
              continue;
            }
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const long iy = static_cast<long>(oy * sh + ky) - static_cast<long>(ph);
              if (iy < 0 || iy >= static_cast<long>(g.h)) {
                std::fill(out, out + g.ow, S{0});
                out += g.ow;
                continue;
              }
              const S* xrow = xc + (static_cast<std::size_t>(it) * g.h + static_cast<std::size_t>(iy)) * g.w;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const long ix = static_cast<long>(ox * sw + kx) - static_cast<long>(pw);
                *out++ = (ix < 0 || ix >= static_cast<long>(g.w)) ? S{0} : xrow[ix];
              }
            }
          }
          row += g.out_plane();
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into dx.
template <typename S>
void col2im(const Geometry& g, const S* cols, S* dx) {
  const auto [st, sh, sw] = g.spec.stride;
  const auto [pt, ph, pw] = g.spec.pad;
  const S* row = cols;
  for (std::size_t c = 0; c < g.ci; ++c) {
    S* xc = dx + c * g.in_plane();
    for (std::size_t kt = 0; kt < g.kd; ++kt) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const S* in = row;
          for (std::size_t ot = 0; ot < g.od; ++ot) {
            const long it = static_cast<long>(ot * st + kt) - static_cast<long>(pt);
            if (it < 0 || it >= static_cast<long>(g.d)) {
              in += g.oh * g.ow;
              continue;
            }
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const long iy = static_cast<long>(oy * sh + ky) - static_cast<long>(ph);
              if (iy < 0 || iy >= static_cast<long>(g.h)) {
                in += g.ow;
                continue;
              }
              S* xrow = xc + (static_cast<std::size_t>(it) * g.h + static_cast<std::size_t>(iy)) * g.w;
              for (std::size_t ox = 0; ox < g.ow; ++ox, ++in) {
                const long ix = static_cast<long>(ox * sw + kx) - static_cast<long>(pw);
                if (ix >= 0 && ix < static_cast<long>(g.w)) xrow[ix] += *in;
              }
            }
          }
          row += g.out_plane();
        }
      }
    }
  }
}

}  // namespace

template <typename S>
BasicTensor<S> conv3d(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                      const BasicTensor<S>& bias, const ConvSpec& spec) {
  const Geometry g = geometry(input, weight, spec);
  if (bias.defined() && bias.numel() != g.co) {
    throw ShapeError("conv bias " + bias.shape().str() + " does not match " + std::to_string(g.co) +
                     " output channels");
  }
  BasicTensor<S> out(TensorShape{g.n, g.co, g.od, g.oh, g.ow});
  const std::size_t K = g.k_rows(), P = g.out_plane();
  std::vector<S> cols(g.pointwise() ? 0 : K * P);
  for (std::size_t n = 0; n < g.n; ++n) {
    const S* x = input.data().data() + n * g.ci * g.in_plane();
    S* y = out.data().data() + n * g.co * P;
    if (bias.defined()) {
      for (std::size_t c = 0; c < g.co; ++c) std::fill(y + c * P, y + (c + 1) * P, bias[c]);
    }
    const S* b = x;
    if (!g.pointwise()) {
      im2col(g, x, cols.data());
      b = cols.data();
    }
    detail::gemm(false, false, static_cast<int>(g.co), static_cast<int>(P), static_cast<int>(K), S{1},
                 weight.data().data(), static_cast<int>(K), b, static_cast<int>(P),
                 bias.defined() ? S{1} : S{0}, y, static_cast<int>(P));
  }
  return out;
}

template <typename S>
ConvGrads<S> conv3d_backward(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                             const BasicTensor<S>& grad_out, const ConvSpec& spec,
                             bool need_input_grad) {
  const Geometry g = geometry(input, weight, spec);
  const TensorShape expect{g.n, g.co, g.od, g.oh, g.ow};
  if (grad_out.shape() != expect) {
    throw ShapeError("conv grad_out " + grad_out.shape().str() + " does not match output " + expect.str());
  }
  const std::size_t K = g.k_rows(), P = g.out_plane();
  ConvGrads<S> grads;
  grads.weight = BasicTensor<S>(weight.shape());
  grads.bias = BasicTensor<S>(TensorShape{g.co});
  if (need_input_grad) grads.input = BasicTensor<S>(input.shape());

  std::vector<S> cols(g.pointwise() ? 0 : K * P);
  std::vector<S> dcols(need_input_grad && !g.pointwise() ? K * P : 0);
  for (std::size_t n = 0; n < g.n; ++n) {
    const S* x = input.data().data() + n * g.ci * g.in_plane();
    const S* dy = grad_out.data().data() + n * g.co * P;
    for (std::size_t c = 0; c < g.co; ++c) {
      S acc{0};
      for (std::size_t p = 0; p < P; ++p) acc += dy[c * P + p];
      grads.bias[c] += acc;
    }
    const S* b = x;
    if (!g.pointwise()) {
      im2col(g, x, cols.data());
      b = cols.data();
    }
    // dW += dY * cols^T
    detail::gemm(false, true, static_cast<int>(g.co), static_cast<int>(K), static_cast<int>(P), S{1}, dy,
                 static_cast<int>(P), b, static_cast<int>(P), S{1}, grads.weight.data().data(),
                 static_cast<int>(K));
    if (!need_input_grad) continue;
    S* dx = grads.input.data().data() + n * g.ci * g.in_plane();
    if (g.pointwise()) {
      detail::gemm(true, false, static_cast<int>(K), static_cast<int>(P), static_cast<int>(g.co), S{1},
                   weight.data().data(), static_cast<int>(K), dy, static_cast<int>(P), S{0}, dx,
                   static_cast<int>(P));
    } else {
      detail::gemm(true, false, static_cast<int>(K), static_cast<int>(P), static_cast<int>(g.co), S{1},
                   weight.data().data(), static_cast<int>(K), dy, static_cast<int>(P), S{0}, dcols.data(),
                   static_cast<int>(P));
      col2im(g, dcols.data(), dx);
    }
  }
  return grads;
}

namespace {

template <typename S>
BasicTensor<S> lift_input(const BasicTensor<S>& t) {
  if (t.rank() != 4) throw ShapeError("conv2d expects input [N,C,H,W], got " + t.shape().str());
  return t.reshaped(TensorShape{t.dim(0), t.dim(1), 1, t.dim(2), t.dim(3)});
}

template <typename S>
BasicTensor<S> lift_weight(const BasicTensor<S>& t) {
  if (t.rank() != 4) throw ShapeError("conv2d expects weight [Co,Ci,kH,kW], got " + t.shape().str());
  return t.reshaped(TensorShape{t.dim(0), t.dim(1), 1, t.dim(2), t.dim(3)});
}

ConvSpec planar(ConvSpec spec) {
  spec.stride[0] = 1;
  spec.pad[0] = 0;
  return spec;
}

template <typename S>
BasicTensor<S> drop_temporal(BasicTensor<S>&& t) {
  const TensorShape s{t.dim(0), t.dim(1), t.dim(3), t.dim(4)};
  return std::move(t).reshaped(s);
}

}  // namespace

template <typename S>
BasicTensor<S> conv2d(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                      const BasicTensor<S>& bias, const ConvSpec& spec) {
  return drop_temporal(conv3d(lift_input(input), lift_weight(weight), bias, planar(spec)));
}

template <typename S>
ConvGrads<S> conv2d_backward(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                             const BasicTensor<S>& grad_out, const ConvSpec& spec,
                             bool need_input_grad) {
  if (grad_out.rank() != 4) throw ShapeError("conv2d grad_out must be rank 4");
  auto grads = conv3d_backward(lift_input(input), lift_weight(weight), lift_input(grad_out), planar(spec),
                               need_input_grad);
  grads.weight = std::move(grads.weight).reshaped(weight.shape());
  if (need_input_grad) grads.input = std::move(grads.input).reshaped(input.shape());
  return grads;
}

#define SEQVESSEL_INSTANTIATE(S)                                                                       \
  template BasicTensor<S> conv3d(const BasicTensor<S>&, const BasicTensor<S>&, const BasicTensor<S>&, \
                                 const ConvSpec&);                                                     \
  template ConvGrads<S> conv3d_backward(const BasicTensor<S>&, const BasicTensor<S>&,                 \
                                        const BasicTensor<S>&, const ConvSpec&, bool);                \
  template BasicTensor<S> conv2d(const BasicTensor<S>&, const BasicTensor<S>&, const BasicTensor<S>&, \
                                 const ConvSpec&);                                                     \
  template ConvGrads<S> conv2d_backward(const BasicTensor<S>&, const BasicTensor<S>&,                 \
                                        const BasicTensor<S>&, const ConvSpec&, bool);

SEQVESSEL_INSTANTIATE(float)
SEQVESSEL_INSTANTIATE(double)

#undef SEQVESSEL_INSTANTIATE

}  // namespace seqvessel
