#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>

#include "tsan/autodiff/parameter.hpp"
#include "tsan/autodiff/tensor.hpp"

namespace tsan {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  // Gradient accumulated by the last backward pass (zeros if none reached).
  BasicTensor<T> grad() const;

  Tape<T>* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run record of executed primitives. Each forward pass builds a
// fresh tape; backward() replays it once in reverse.
template <typename T>
class Tape {
 public:
  // Receives the gradient of the op's output and accumulates into its inputs.
  using BackwardFn = std::function<void(Tape&, const BasicTensor<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(BasicTensor<T> value) { return push(std::move(value), false, {}, nullptr, "constant"); }
  Var<T> variable(BasicTensor<T> value) { return push(std::move(value), true, {}, nullptr, "variable"); }
  Var<T> parameter(Parameter<T>& param) {
    return push(param.value, param.trainable, {}, &param, "parameter");
  }

  // Appends an op output. The backward closure is kept only when some input
  // requires grad. Non-finite outputs raise NumericError naming the op.
  Var<T> record(std::string_view op, BasicTensor<T> value, bool requires_grad, BackwardFn fn) {
    if (!value.all_finite()) {
      throw NumericError("non-finite value produced by op '" + std::string(op) + "'");
    }
    return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : BackwardFn{},
                nullptr, op);
  }

  const BasicTensor<T>& value(const Var<T>& v) const { return node(v).value; }
  bool requires_grad(const Var<T>& v) const { return node(v).requires_grad; }

  // Gradient buffer for `v`, zero-initialized on first access.
  BasicTensor<T>& grad_slot(const Var<T>& v) {
    Node& n = node(v);
    if (!n.has_grad) {
      n.grad = BasicTensor<T>::zeros(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  BasicTensor<T> grad(const Var<T>& v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : BasicTensor<T>::zeros(n.value.shape());
  }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure in
  // reverse order. Parameter leaves add their gradient into Parameter::grad.
  void backward(const Var<T>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  // Number of op closures executed by the last backward().
  std::size_t backward_visits() const noexcept { return visits_; }
  std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    std::string_view op;
  };

  Var<T> push(BasicTensor<T> value, bool requires_grad, BackwardFn fn, Parameter<T>* param,
              std::string_view op) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    n.param = param;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  Node& node(const Var<T>& v) {
    check_owner(v);
    return nodes_[v.id()];
  }
  const Node& node(const Var<T>& v) const {
    check_owner(v);
    return nodes_[v.id()];
  }
  void check_owner(const Var<T>& v) const {
    if (v.tape() != this) {
      throw ContractError("variable belongs to a different tape");
    }
  }

  std::deque<Node> nodes_;
  bool backward_done_ = false;
  std::size_t visits_ = 0;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  if (!tape_) throw ContractError("use of an unbound variable");
  return tape_->value(*this);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_ && tape_->requires_grad(*this);
}

template <typename T>
BasicTensor<T> Var<T>::grad() const {
  if (!tape_) throw ContractError("use of an unbound variable");
  return tape_->grad(*this);
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
  }
  if (backward_done_) {
    throw ContractError("backward() already ran on this tape");
  }
  backward_done_ = true;
  visits_ = 0;
  grad_slot(loss).fill(T{1});
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
      ++visits_;
    }
    if (n.param != nullptr) {
      Parameter<T>& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = BasicTensor<T>::zeros(p.value.shape());
      auto dst = p.grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      p.grad_ready = true;
    }
  }
}

// Zeroes every gradient in `params`, then backpropagates `loss`. Parameters
// the loss does not reach keep a zero gradient.
template <typename T>
void backward(Tape<T>& tape, const Var<T>& loss, ParameterSet<T>& params) {
  params.zero_grad();
  tape.backward(loss);
}

}  // namespace tsan
