#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tsan/autodiff/tensor.hpp"

namespace tsan {

// A learnable tensor plus its gradient and Adam moment accumulators.
// Non-trainable entries (batch-norm running statistics) share the container so
// that checkpoints capture them, but the optimizer skips them.
template <typename T>
struct Parameter {
  std::string path;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
  std::int64_t step_count = 0;
  bool trainable = true;
  bool grad_ready = false;
};

// Ordered collection of parameters addressed by unique string paths.
// Element addresses are stable for the lifetime of the set.
template <typename T>
class ParameterSet {
 public:
  using iterator = typename std::deque<Parameter<T>>::iterator;
  using const_iterator = typename std::deque<Parameter<T>>::const_iterator;

  Parameter<T>& add(std::string path, BasicTensor<T> value, bool trainable = true) {
    if (index_.contains(path)) {
      throw ContractError("duplicate parameter path '" + path + "'");
    }
    Parameter<T> p;
    p.path = path;
    p.grad = BasicTensor<T>::zeros(value.shape());
    p.adam_m = BasicTensor<T>::zeros(value.shape());
    p.adam_v = BasicTensor<T>::zeros(value.shape());
    p.value = std::move(value);
    p.trainable = trainable;
    index_.emplace(std::move(path), params_.size());
    params_.push_back(std::move(p));
    return params_.back();
  }

  bool contains(std::string_view path) const { return index_.find(path) != index_.end(); }

  Parameter<T>* find(std::string_view path) {
    auto it = index_.find(path);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<T>* find(std::string_view path) const {
    auto it = index_.find(path);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  Parameter<T>& at(std::string_view path) {
    if (auto* p = find(path)) return *p;
    throw ContractError("unknown parameter path '" + std::string(path) + "'");
  }
  const Parameter<T>& at(std::string_view path) const {
    if (const auto* p = find(path)) return *p;
    throw ContractError("unknown parameter path '" + std::string(path) + "'");
  }

  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }
  iterator begin() { return params_.begin(); }
  iterator end() { return params_.end(); }
  const_iterator begin() const { return params_.begin(); }
  const_iterator end() const { return params_.end(); }

  // Sets every gradient to zero and marks it as populated; a subsequent
  // backward pass accumulates into these buffers.
  void zero_grad() {
    for (auto& p : params_) {
      if (p.grad.shape() != p.value.shape()) {
        p.grad = BasicTensor<T>::zeros(p.value.shape());
      } else {
        p.grad.fill(T{0});
      }
      p.grad_ready = true;
    }
  }

  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.path);
    return out;
  }

  std::size_t scalar_count(bool trainable_only = true) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (!trainable_only || p.trainable) n += p.value.size();
    }
    return n;
  }

  // Converts values to another precision; optimizer state is reset.
  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) {
      out.add(p.path, p.value.template cast<U>(), p.trainable);
    }
    return out;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace tsan
