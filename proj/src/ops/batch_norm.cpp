#include <cmath>

#include "seqvessel/ops.hpp"

namespace seqvessel {

namespace {

struct Layout {
  std::size_t n, c, inner;
};

template <typename S>
Layout layout(const BasicTensor<S>& x) {
  if (x.rank() != 4 && x.rank() != 5) {
    throw ShapeError("batch_norm expects [N,C,H,W] or [N,C,T,H,W], got " + x.shape().str());
  }
  return {x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1))};
}

template <typename S>
void check_channels(const BasicTensor<S>& t, std::size_t c, const char* what) {
  if (!t.defined() || t.numel() != c) {
    throw ShapeError(std::string("batch_norm ") + what + " must have " + std::to_string(c) + " entries");
  }
}

}  // namespace

template <typename S>
BatchNormState<S> BatchNormState<S>::identity(std::size_t channels) {
  BatchNormState s;
  s.gamma = BasicTensor<S>(TensorShape{channels}, S{1});
  s.beta = BasicTensor<S>(TensorShape{channels}, S{0});
  s.running_mean = BasicTensor<S>(TensorShape{channels}, S{0});
  s.running_var = BasicTensor<S>(TensorShape{channels}, S{1});
  return s;
}

template <typename S>
BasicTensor<S> batch_norm(const BasicTensor<S>& input, const BasicTensor<S>& gamma,
                          const BasicTensor<S>& beta, BasicTensor<S>& running_mean,
                          BasicTensor<S>& running_var, Mode mode, const BatchNormOptions& options,
                          BatchNormCache<S>* cache) {
  const Layout L = layout(input);
  check_channels(gamma, L.c, "gamma");
  check_channels(beta, L.c, "beta");
  if (mode == Mode::infer && (!running_mean.defined() || !running_var.defined())) {
    throw std::logic_error("batch_norm infer mode requires initialized running statistics");
  }
  if (running_mean.defined()) check_channels(running_mean, L.c, "running_mean");
  if (running_var.defined()) check_channels(running_var, L.c, "running_var");

  BasicTensor<S> out(input.shape());
  BasicTensor<S> xhat;
  if (cache) xhat = BasicTensor<S>(input.shape());
  std::vector<double> inv_std(L.c);
  const double count = static_cast<double>(L.n * L.inner);
  auto x = input.data();

  for (std::size_t c = 0; c < L.c; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < L.n; ++n) {
        const S* p = x.data() + (n * L.c + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) sum += p[i];
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < L.n; ++n) {
        const S* p = x.data() + (n * L.c + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      if (running_mean.defined()) {
        const double m = options.momentum;
        running_mean[c] = static_cast<S>((1.0 - m) * running_mean[c] + m * mean);
        running_var[c] = static_cast<S>((1.0 - m) * running_var[c] + m * var);
      }
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + options.epsilon);
    inv_std[c] = is;
    const double g = gamma[c], b = beta[c];
    for (std::size_t n = 0; n < L.n; ++n) {
      const std::size_t base = (n * L.c + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const double h = (x[base + i] - mean) * is;
        if (cache) xhat[base + i] = static_cast<S>(h);
        out[base + i] = static_cast<S>(g * h + b);
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

template <typename S>
BatchNormGrads<S> batch_norm_backward(const BatchNormCache<S>& cache, const BasicTensor<S>& gamma,
                                      const BasicTensor<S>& grad_out) {
  if (!cache.normalized.defined()) throw std::logic_error("batch_norm_backward without forward cache");
  if (grad_out.shape() != cache.normalized.shape()) {
    throw ShapeError("batch_norm grad_out " + grad_out.shape().str() + " does not match " +
                     cache.normalized.shape().str());
  }
  const Layout L = layout(grad_out);
  BatchNormGrads<S> g;
  g.input = BasicTensor<S>(grad_out.shape());
  g.gamma = BasicTensor<S>(TensorShape{L.c});
  g.beta = BasicTensor<S>(TensorShape{L.c});
  const double count = static_cast<double>(L.n * L.inner);
  auto dy = grad_out.data();
  auto xh = cache.normalized.data();

  for (std::size_t c = 0; c < L.c; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < L.n; ++n) {
      const std::size_t base = (n * L.c + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xh += static_cast<double>(dy[base + i]) * xh[base + i];
      }
    }
    g.beta[c] = static_cast<S>(sum_dy);
    g.gamma[c] = static_cast<S>(sum_dy_xh);
    const double k = gamma[c] * cache.inv_std[c];
    const double mean_dy = sum_dy / count, mean_dy_xh = sum_dy_xh / count;
    for (std::size_t n = 0; n < L.n; ++n) {
      const std::size_t base = (n * L.c + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const double d = cache.mode == Mode::train ? dy[base + i] - mean_dy - xh[base + i] * mean_dy_xh
                                                   : dy[base + i];
        g.input[base + i] = static_cast<S>(k * d);
      }
    }
  }
  return g;
}

#define SEQVESSEL_INSTANTIATE(S)                                                                      \
  template struct BatchNormState<S>;                                                                  \
  template BasicTensor<S> batch_norm(const BasicTensor<S>&, const BasicTensor<S>&,                   \
                                     const BasicTensor<S>&, BasicTensor<S>&, BasicTensor<S>&, Mode,   \
                                     const BatchNormOptions&, BatchNormCache<S>*);                    \
  template BatchNormGrads<S> batch_norm_backward(const BatchNormCache<S>&, const BasicTensor<S>&,     \
                                                 const BasicTensor<S>&);

SEQVESSEL_INSTANTIATE(float)
SEQVESSEL_INSTANTIATE(double)

#undef SEQVESSEL_INSTANTIATE

}  // namespace seqvessel
