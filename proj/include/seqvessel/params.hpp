#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "seqvessel/tensor.hpp"

namespace seqvessel {

template <typename S>
struct Parameter {
  BasicTensor<S> value;
  BasicTensor<S> grad;
  BasicTensor<S> momentum;
};

/// Named learnable tensors plus non-learnable buffers (BN running stats).
/// Iteration is lexicographic by name. std::map keeps element addresses
/// stable, so layers hold plain pointers into the store.
template <typename S>
class ParameterStore {
 public:
  using ParamMap = std::map<std::string, Parameter<S>>;
  using BufferMap = std::map<std::string, BasicTensor<S>>;

  Parameter<S>& add(const std::string& name, BasicTensor<S> init) {
    if (params_.contains(name) || buffers_.contains(name)) {
      throw std::invalid_argument("duplicate parameter name " + name);
    }
    Parameter<S> p;
    p.grad = zeros_like(init);
    p.momentum = zeros_like(init);
    p.value = std::move(init);
    return params_.emplace(name, std::move(p)).first->second;
  }

  BasicTensor<S>& add_buffer(const std::string& name, BasicTensor<S> init) {
    if (params_.contains(name) || buffers_.contains(name)) {
      throw std::invalid_argument("duplicate buffer name " + name);
    }
    return buffers_.emplace(name, std::move(init)).first->second;
  }

  Parameter<S>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
  }
  const Parameter<S>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
  }
  BasicTensor<S>& buffer(const std::string& name) {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw std::out_of_range("unknown buffer " + name);
    return it->second;
  }

  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }
  BufferMap& buffers() { return buffers_; }
  const BufferMap& buffers() const { return buffers_; }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(S{0});
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.numel();
    return n;
  }

 private:
  ParamMap params_;
  BufferMap buffers_;
};

}  // namespace seqvessel
