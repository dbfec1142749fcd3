#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqvessel {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Ordered list of axis lengths. A default-constructed shape is "undefined"
/// (rank 0, no elements); every constructed shape has rank >= 1 and all
/// dims >= 1.
class TensorShape {
 public:
  TensorShape() = default;
  TensorShape(std::initializer_list<std::size_t> dims);
  explicit TensorShape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const;
  bool defined() const { return !dims_.empty(); }

  std::string str() const;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

/// Dense row-major array (last axis fastest).
template <typename S>
class BasicTensor {
 public:
  using value_type = S;

  BasicTensor() = default;
  explicit BasicTensor(TensorShape shape, S fill = S{0});

  /// Copies `values` into a new tensor; throws ShapeError on length mismatch.
  static BasicTensor from(TensorShape shape, std::span<const S> values);
  static BasicTensor from(TensorShape shape, std::vector<S>&& values);
  static BasicTensor from(TensorShape shape, std::initializer_list<S> values) {
    return from(std::move(shape), std::span<const S>(values.begin(), values.size()));
  }

  const TensorShape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t numel() const { return data_.size(); }
  bool defined() const { return shape_.defined(); }

  std::span<S> data() { return data_; }
  std::span<const S> data() const { return data_; }
  const std::vector<S>& values() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  S& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const S& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  /// Same data, new shape of equal element count.
  BasicTensor reshaped(TensorShape shape) const&;
  BasicTensor reshaped(TensorShape shape) &&;

  void fill(S value);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>::from(shape_, std::move(out));
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  TensorShape shape_;
  std::vector<S> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename S>
BasicTensor<S> zeros_like(const BasicTensor<S>& t) {
  return BasicTensor<S>(t.shape());
}

enum class BinaryOp { add, sub, mul };

/// Elementwise a (op) b. `b` may equal a's shape with a suffix of axes
/// replaced by 1, e.g. [C,1,1] against [C,H,W]; it is then repeated along
/// those axes.
template <typename S>
BasicTensor<S> ew_binary(BinaryOp op, const BasicTensor<S>& a, const BasicTensor<S>& b);

/// Sum over `axes`. Each output element accumulates its inputs in ascending
/// flat-index order, so the result does not depend on `partitions` (the
/// number of workers splitting the output elements). With keep=false the
/// reduced axes are dropped; reducing every axis yields shape [1].
template <typename S>
BasicTensor<S> reduce_sum(const BasicTensor<S>& t, std::span<const std::size_t> axes, bool keep,
                          std::size_t partitions = 1);

template <typename S>
BasicTensor<S> reduce_sum(const BasicTensor<S>& t, std::initializer_list<std::size_t> axes,
                          bool keep, std::size_t partitions = 1) {
  return reduce_sum(t, std::span<const std::size_t>(axes.begin(), axes.size()), keep, partitions);
}

template <typename S>
bool all_finite(const BasicTensor<S>& t);

}  // namespace seqvessel
