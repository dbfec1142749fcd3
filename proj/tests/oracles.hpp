#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. None of them call into the library's compute paths.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "seqvessel/ops.hpp"
#include "seqvessel/rng.hpp"
#include "seqvessel/svsnet.hpp"

namespace oracle {

using seqvessel::ConvSpec;
using seqvessel::CounterRng;
using seqvessel::TensorD;
using seqvessel::TensorShape;

inline TensorD random_tensor(TensorShape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Direct nested-loop cross-correlation over [N,Ci,T,H,W] with zero padding.
inline TensorD conv3d(const TensorD& x, const TensorD& w, const TensorD& b, const ConvSpec& spec) {
  const std::size_t n = x.dim(0), ci = x.dim(1), t = x.dim(2), h = x.dim(3), wd = x.dim(4);
  const std::size_t co = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const auto [st, sh, sw] = spec.stride;
  const auto [pt, ph, pw] = spec.pad;
  const std::size_t to = (t + 2 * pt - kt) / st + 1, ho = (h + 2 * ph - kh) / sh + 1, wo = (wd + 2 * pw - kw) / sw + 1;
  TensorD y(TensorShape{n, co, to, ho, wo});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t a = 0; a < to; ++a)
        for (std::size_t i = 0; i < ho; ++i)
          for (std::size_t j = 0; j < wo; ++j) {
            double acc = b[o];
            for (std::size_t c = 0; c < ci; ++c)
              for (std::size_t dt = 0; dt < kt; ++dt)
                for (std::size_t di = 0; di < kh; ++di)
                  for (std::size_t dj = 0; dj < kw; ++dj) {
                    const long tt = static_cast<long>(a * st + dt) - static_cast<long>(pt);
                    const long ii = static_cast<long>(i * sh + di) - static_cast<long>(ph);
                    const long jj = static_cast<long>(j * sw + dj) - static_cast<long>(pw);
                    if (tt < 0 || ii < 0 || jj < 0 || tt >= static_cast<long>(t) || ii >= static_cast<long>(h) ||
                        jj >= static_cast<long>(wd))
                      continue;
                    acc += x.at({in, c, static_cast<std::size_t>(tt), static_cast<std::size_t>(ii),
                                 static_cast<std::size_t>(jj)}) *
                           w.at({o, c, dt, di, dj});
                  }
            y.at({in, o, a, i, j}) = acc;
          }
  return y;
}

inline TensorD conv2d(const TensorD& x, const TensorD& w, const TensorD& b, const ConvSpec& spec) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t sh = spec.stride[1], sw = spec.stride[2], ph = spec.pad[1], pw = spec.pad[2];
  const std::size_t ho = (h + 2 * ph - kh) / sh + 1, wo = (wd + 2 * pw - kw) / sw + 1;
  TensorD y(TensorShape{n, co, ho, wo});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t di = 0; di < kh; ++di)
              for (std::size_t dj = 0; dj < kw; ++dj) {
                const long ii = static_cast<long>(i * sh + di) - static_cast<long>(ph);
                const long jj = static_cast<long>(j * sw + dj) - static_cast<long>(pw);
                if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(wd)) continue;
                acc += x.at({in, c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)}) * w.at({o, c, di, dj});
              }
          y.at({in, o, i, j}) = acc;
        }
  return y;
}

/// Random convolution problem with dims <= 6 and channels <= 3.
struct ConvCase {
  TensorD x, w, b;
  ConvSpec spec;
};

inline ConvCase random_conv_case(bool three_d, CounterRng& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); };
  ConvCase c;
  const std::size_t n = pick(1, 2), ci = pick(1, 3), co = pick(1, 3);
  std::size_t ext[3], k[3];
  for (int a = 0; a < 3; ++a) {
    ext[a] = pick(1, 6);
    k[a] = pick(1, 3);
    c.spec.stride[a] = pick(1, 2);
    c.spec.pad[a] = pick(0, 1);
    // keep the output extent >= 1
    while (ext[a] + 2 * c.spec.pad[a] < k[a]) ++ext[a];
  }
  if (three_d) {
    c.x = random_tensor(TensorShape{n, ci, ext[0], ext[1], ext[2]}, rng);
    c.w = random_tensor(TensorShape{co, ci, k[0], k[1], k[2]}, rng);
  } else {
    c.x = random_tensor(TensorShape{n, ci, ext[1], ext[2]}, rng);
    c.w = random_tensor(TensorShape{co, ci, k[1], k[2]}, rng);
  }
  c.b = random_tensor(TensorShape{co}, rng);
  return c;
}

struct Counts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

template <typename T>
Counts count(const T& pred, const T& gt) {
  Counts c;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct Prf {
  double dr, p, f;
};

/// Empty-set conventions: DR = 1 iff there is nothing to detect and nothing
/// was predicted, likewise for P; F = 0 when DR + P = 0.
inline Prf prf(const Counts& c) {
  Prf r{};
  r.dr = c.tp + c.fn == 0 ? (c.fp == 0 ? 1.0 : 0.0) : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.p = c.tp + c.fp == 0 ? (c.fn == 0 ? 1.0 : 0.0) : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  r.f = r.dr + r.p == 0.0 ? 0.0 : 2.0 * r.dr * r.p / (r.dr + r.p);
  return r;
}

/// Closed-form learnable scalar count, layer by layer.
inline std::size_t param_count(const seqvessel::NetworkConfig& cfg) {
  const std::size_t S = cfg.stages, T = cfg.window;
  auto ch = [&](std::size_t s) {
    std::size_t c = cfg.base_channels;
    for (std::size_t k = 1; k < s; ++k) c *= 2;
    return c < cfg.channel_cap ? c : cfg.channel_cap;
  };
  const bool enc3d = cfg.encoder == seqvessel::EncoderKind::conv3d;
  const std::size_t kv = enc3d ? 27 : 9;
  std::size_t total = 0;
  for (std::size_t s = 1; s <= S; ++s) {
    const std::size_t c = ch(s), cin = s == 1 ? 1 : ch(s - 1);
    total += cin * c * kv + c + 2 * c;                   // stem conv + BN
    const std::size_t blocks = enc3d ? 1 : cfg.encoder2d_blocks;
    total += blocks * 2 * (c * c * kv + c + 2 * c);      // residual blocks, identity shortcut
    if (enc3d) total += (cfg.ffo_depthwise ? c * T : c * c * T) + c;
  }
  for (std::size_t s = 1; s < S; ++s) {
    const std::size_t c = ch(s);
    total += ch(s + 1) * c + c;                          // 1x1 channel alignment
    if (cfg.attention) total += (2 * c * c + c) + (c * c + c);
    total += 2 * (c * c * 9 + c + 2 * c);
  }
  return total + ch(1) + 1;                              // head
}

inline seqvessel::NetworkConfig desk_config() {
  seqvessel::NetworkConfig c;
  c.stages = 4;
  c.base_channels = 4;
  c.window = 4;
  c.height = c.width = 64;
  return c;
}

}  // namespace oracle
