#include "reach/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "reach/errors.hpp"

namespace reach::nn {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

template <typename T>
void Tape<T>::check_owned(Var<T> v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw GraphError("variable is not recorded on this tape");
  }
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  if (consumed_) throw GraphError("tape already consumed by backward()");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  if (consumed_) throw GraphError("tape already consumed by backward()");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  if (consumed_) throw GraphError("tape already consumed by backward()");
  if (p.grad.shape() != p.value.shape()) p.zero_grad();
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward) {
  if (consumed_) throw GraphError("tape already consumed by backward()");
  bool needs = false;
  for (const auto& in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var<T> v) const {
  check_owned(v);
  return nodes_[v.id].value;
}

template <typename T>
bool Tape<T>::requires_grad(Var<T> v) const {
  check_owned(v);
  return nodes_[v.id].requires_grad;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  check_owned(v);
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor<T>(n.value.shape());
  return Tensor<T>(n.value.shape(), n.grad);
}

template <typename T>
std::span<T> Tape<T>::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  check_owned(loss);
  if (consumed_) throw GraphError("backward() called twice on the same tape");
  Node& root = nodes_[loss.id];
  if (!root.requires_grad) throw GraphError("loss does not depend on any parameter or variable");
  if (root.value.size() != 1) throw GraphError("loss must be a scalar, got shape " + to_string(root.value.shape()));
  consumed_ = true;
  root.grad.assign(1, T{1});
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, static_cast<std::uint32_t>(i));
    } else if (n.param != nullptr) {
      T* g = n.param->grad.data();
      for (std::size_t k = 0; k < n.grad.size(); ++k) g[k] += n.grad[k];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace reach::nn
