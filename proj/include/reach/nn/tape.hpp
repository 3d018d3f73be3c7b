#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>

#include "reach/nn/tensor.hpp"

namespace reach::nn {

template <typename T>
class Tape;

/// A trainable tensor together with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
};

/// Records operations in execution order and replays their adjoints in reverse.
///
/// A tape is single-use: backward() may be called once. Gradients of
/// parameters accumulate into Parameter::grad so that a parameter used at
/// several sites (or on several tapes) sums its contributions.
template <typename T>
class Tape {
 public:
  /// Adjoint rule for one recorded node. Reads the node's output gradient via
  /// out_grad(self) and accumulates into input gradients via grad_buffer().
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Leaf whose gradient is kept on the tape (read back with grad()).
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to a parameter; backward() adds into p.grad.
  Var<T> parameter(Parameter<T>& p);
  /// Parameter value used without gradient tracking.
  Var<T> frozen(const Parameter<T>& p) { return constant(p.value); }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward);

  const Tensor<T>& value(Var<T> v) const;
  const Tensor<T>& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(Var<T> v) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the loss with respect to v; zeros if nothing flowed into it.
  Tensor<T> grad(Var<T> v) const;

  /// Output gradient of node `id` while its adjoint runs.
  std::span<const T> out_grad(std::uint32_t id) const { return nodes_[id].grad; }
  /// Input gradient accumulator; empty if `id` does not require gradients.
  std::span<T> grad_buffer(std::uint32_t id);

  /// Seeds d(loss)/d(loss) = 1 and runs every adjoint in reverse order.
  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(Var<T> v) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace reach::nn
