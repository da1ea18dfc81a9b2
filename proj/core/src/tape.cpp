#include "bnfree/tape.hpp"

#include <string>

#include "bnfree/error.hpp"

namespace bnfree {

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(NodeId id) const {
  const int32_t i = index_of(id);
  if (i < 0 || i >= size()) {
    throw ShapeError("tape node " + std::to_string(i) + " does not exist");
  }
  return nodes_[static_cast<size_t>(i)];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(NodeId id) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).node(id));
}

template <typename T>
NodeId Tape<T>::leaf(BasicTensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return NodeId{size() - 1};
}

template <typename T>
NodeId Tape<T>::record(BasicTensor<T> value, std::vector<NodeId> inputs, Backward backward) {
  Node n;
  for (NodeId in : inputs) {
    // An input at or beyond the new node's index would close a cycle.
    if (index_of(in) < 0 || index_of(in) >= size()) {
      throw ShapeError("tape input " + std::to_string(index_of(in)) + " is not an earlier node");
    }
    n.requires_grad = n.requires_grad || nodes_[static_cast<size_t>(index_of(in))].requires_grad;
  }
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return NodeId{size() - 1};
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(NodeId id) const {
  return node(id).value;
}

template <typename T>
const std::vector<NodeId>& Tape<T>::inputs(NodeId id) const {
  return node(id).inputs;
}

template <typename T>
bool Tape<T>::requires_grad(NodeId id) const {
  return node(id).requires_grad;
}

template <typename T>
const BasicTensor<T>* Tape<T>::grad(NodeId id) const {
  const Node& n = node(id);
  return n.grad ? &*n.grad : nullptr;
}

template <typename T>
BasicTensor<T>& Tape<T>::grad_buffer(NodeId id) {
  Node& n = node(id);
  if (!n.grad) n.grad.emplace(n.value.shape());
  return *n.grad;
}

template <typename T>
void Tape<T>::accumulate(NodeId id, const BasicTensor<T>& g) {
  if (!requires_grad(id)) return;
  BasicTensor<T>& buf = grad_buffer(id);
  if (buf.shape() != g.shape()) {
    throw ShapeError("gradient shape " + g.shape().str() + " does not match node shape " +
                     buf.shape().str());
  }
  T* dst = buf.ptr();
  const T* src = g.ptr();
  for (int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::backward(NodeId loss) {
  Node& l = node(loss);
  if (l.value.shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("backward needs a scalar loss, got " + l.value.shape().str());
  }
  for (Node& n : nodes_) n.grad.reset();
  l.grad.emplace(l.value.shape(), T{1});
  for (int32_t i = index_of(loss); i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.grad || !n.backward || !n.requires_grad) continue;
    n.backward(*this, NodeId{i});
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace bnfree
