#include "seqvessel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace seqvessel {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ShapeError("tensor shape must have rank >= 1");
  std::size_t count = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor dims must be >= 1");
    if (count > std::numeric_limits<std::size_t>::max() / d) throw ShapeError("tensor too large");
    count *= d;
  }
}

}  // namespace

TensorShape::TensorShape(std::initializer_list<std::size_t> dims) : dims_(dims) { check_dims(dims_); }

TensorShape::TensorShape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { check_dims(dims_); }

std::size_t TensorShape::numel() const {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string TensorShape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

template <typename S>
BasicTensor<S>::BasicTensor(TensorShape shape, S fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename S>
BasicTensor<S> BasicTensor<S>::from(TensorShape shape, std::span<const S> values) {
  return from(std::move(shape), std::vector<S>(values.begin(), values.end()));
}

template <typename S>
BasicTensor<S> BasicTensor<S>::from(TensorShape shape, std::vector<S>&& values) {
  if (shape.numel() != values.size()) {
    throw ShapeError("size mismatch " + std::to_string(shape.numel()) + "≠" +
                     std::to_string(values.size()) + " for shape " + shape.str());
  }
  BasicTensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

template <typename S>
BasicTensor<S> BasicTensor<S>::reshaped(TensorShape shape) const& {
  return BasicTensor(*this).reshaped(std::move(shape));
}

template <typename S>
BasicTensor<S> BasicTensor<S>::reshaped(TensorShape shape) && {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <typename S>
void BasicTensor<S>::fill(S value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename S>
std::size_t BasicTensor<S>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.rank()) throw ShapeError("index rank does not match " + shape_.str());
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for " + shape_.str());
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template <typename S>
BasicTensor<S> ew_binary(BinaryOp op, const BasicTensor<S>& a, const BasicTensor<S>& b) {
  const auto& ad = a.shape().dims();
  const auto& bd = b.shape().dims();
  auto incompatible = [&] {
    return ShapeError("incompatible shapes " + a.shape().str() + " and " + b.shape().str());
  };
  if (ad.size() != bd.size() || ad.empty()) throw incompatible();

  // First axis from which b is all singletons; b matches a before it.
  std::size_t split = ad.size();
  while (split > 0 && bd[split - 1] == 1) --split;
  for (std::size_t i = 0; i < split; ++i) {
    if (ad[i] != bd[i]) throw incompatible();
  }
  std::size_t inner = 1;
  for (std::size_t i = split; i < ad.size(); ++i) inner *= ad[i];

  BasicTensor<S> out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  const std::size_t outer = b.numel();
  for (std::size_t j = 0; j < outer; ++j) {
    const S v = y[j];
    const std::size_t base = j * inner;
    switch (op) {
      case BinaryOp::add:
        for (std::size_t i = 0; i < inner; ++i) o[base + i] = x[base + i] + v;
        break;
      case BinaryOp::sub:
        for (std::size_t i = 0; i < inner; ++i) o[base + i] = x[base + i] - v;
        break;
      case BinaryOp::mul:
        for (std::size_t i = 0; i < inner; ++i) o[base + i] = x[base + i] * v;
        break;
    }
  }
  return out;
}

template <typename S>
BasicTensor<S> reduce_sum(const BasicTensor<S>& t, std::span<const std::size_t> axes, bool keep,
                          std::size_t partitions) {
  const auto& dims = t.shape().dims();
  const std::size_t rank = dims.size();
  std::vector<bool> reduced(rank, false);
  for (std::size_t ax : axes) {
    if (ax >= rank) {
      throw ShapeError("reduce axis " + std::to_string(ax) + " out of range for " + t.shape().str());
    }
    reduced[ax] = true;
  }
  if (axes.empty()) return t;

  std::vector<std::size_t> out_dims;
  std::vector<std::size_t> kept_axes, red_axes;
  for (std::size_t i = 0; i < rank; ++i) {
    if (reduced[i]) {
      red_axes.push_back(i);
      if (keep) out_dims.push_back(1);
    } else {
      kept_axes.push_back(i);
      out_dims.push_back(dims[i]);
    }
  }
  if (out_dims.empty()) out_dims.push_back(1);
  BasicTensor<S> out{TensorShape(out_dims)};

  std::vector<std::size_t> strides(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i) strides[i - 1] = strides[i] * dims[i];
  std::size_t red_count = 1;
  for (std::size_t ax : red_axes) red_count *= dims[ax];

  auto src = t.data();
  auto dst = out.data();
  const std::size_t n_out = out.numel();

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(red_axes.size());
    for (std::size_t o = begin; o < end; ++o) {
      // Base offset from the kept coordinates of output element o.
      std::size_t rem = o, base = 0;
      for (std::size_t k = kept_axes.size(); k-- > 0;) {
        const std::size_t ax = kept_axes[k];
        base += (rem % dims[ax]) * strides[ax];
        rem /= dims[ax];
      }
      // Row-major walk over the reduced coordinates visits inputs in
      // ascending flat order.
      std::fill(idx.begin(), idx.end(), 0);
      std::size_t off = base;
      double acc = 0.0;
      for (std::size_t r = 0; r < red_count; ++r) {
        acc += static_cast<double>(src[off]);
        for (std::size_t k = red_axes.size(); k-- > 0;) {
          const std::size_t ax = red_axes[k];
          if (++idx[k] < dims[ax]) {
            off += strides[ax];
            break;
          }
          off -= (dims[ax] - 1) * strides[ax];
          idx[k] = 0;
        }
      }
      dst[o] = static_cast<S>(acc);
    }
  };

  partitions = std::clamp<std::size_t>(partitions, 1, n_out);
  if (partitions == 1) {
    work(0, n_out);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_out + partitions - 1) / partitions;
    for (std::size_t p = 0; p < partitions; ++p) {
      const std::size_t b = p * chunk, e = std::min(n_out, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

template <typename S>
bool all_finite(const BasicTensor<S>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](S v) { return std::isfinite(v); });
}

#define SEQVESSEL_INSTANTIATE(S)                                                                 \
  template class BasicTensor<S>;                                                                 \
  template BasicTensor<S> ew_binary(BinaryOp, const BasicTensor<S>&, const BasicTensor<S>&);    \
  template BasicTensor<S> reduce_sum(const BasicTensor<S>&, std::span<const std::size_t>, bool, \
                                     std::size_t);                                               \
  template bool all_finite(const BasicTensor<S>&);

SEQVESSEL_INSTANTIATE(float)
SEQVESSEL_INSTANTIATE(double)

#undef SEQVESSEL_INSTANTIATE

}  // namespace seqvessel
