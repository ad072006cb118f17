#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "clg/errors.hpp"
#include "clg/nk/tensor.hpp"

namespace clg::nk {

template <class T>
class Tape;

// A trainable weight. Lives outside any tape; tapes copy the value in and
// flush their leaf gradient back into `grad`.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Handle to one recorded value. Cheap to copy; only valid while its tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  Tensor<T> grad() const { return tape->grad(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

// Reverse-mode computation record. Operations append nodes in evaluation
// order; backward() replays their local rules in reverse record order.
// A tape and every Var on it belong to one thread.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, {}, nullptr, nullptr); }
  Var<T> leaf(Tensor<T> v, bool requires_grad = true) { return push(std::move(v), requires_grad, {}, nullptr, nullptr); }

  // Leaf bound to a parameter; flush_param_grads() adds its gradient to p.grad.
  Var<T> param(Parameter<T>& p) { return push(p.value, true, {}, nullptr, &p); }
  // Read-only use of a parameter: no gradient reaches it from this tape.
  Var<T> frozen(const Parameter<T>& p) { return push(p.value, false, {}, nullptr, nullptr); }

  // Records an op output. The node requires grad iff any input does; `fn`
  // is dropped otherwise.
  Var<T> record(Tensor<T> out, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool rg = false;
    for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
    return push(std::move(out), rg, std::move(inputs), rg ? std::move(fn) : BackwardFn{}, nullptr);
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
    const auto& lv = nodes_[loss.id].value;
    if (lv.size() != 1) throw ContractError("backward: loss must be a scalar, got shape " + lv.shape_string());
    if (backward_done_) throw ContractError("backward called twice without reset_grads()");
    backward_done_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    grad_mut(loss.id)[0] += T(1);
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.requires_grad || !n.fn || n.grad.size() == 0) continue;
      n.fn(*this, k);
    }
  }

  void reset_grads() {
    for (auto& n : nodes_) n.grad = Tensor<T>();
    backward_done_ = false;
  }

  // Adds each bound leaf's gradient into its Parameter. Call after backward().
  void flush_param_grads() const {
    for (const auto& n : nodes_) {
      if (!n.bound || n.grad.size() == 0) continue;
      auto& pg = n.bound->grad.values();
      const auto& g = n.grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  Tensor<T> grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) return Tensor<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }
  // Accumulator for node `id`, allocated (zeroed) on first use.
  Tensor<T>& grad_mut(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn fn;
    Parameter<T>* bound = nullptr;
  };

  Var<T> push(Tensor<T> v, bool rg, std::vector<std::size_t> inputs, BackwardFn fn, Parameter<T>* bound) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), rg, std::move(inputs), std::move(fn), bound});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // stable references across push_back
  bool backward_done_ = false;
};

}  // namespace clg::nk
