#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bnfree/tensor.hpp"

namespace bnfree {

enum class NodeId : int32_t {};

constexpr int32_t index_of(NodeId id) { return static_cast<int32_t>(id); }

/// Reverse-mode autodiff tape. Nodes are appended in execution order, so the
/// node table is always topologically sorted; an operation may only consume
/// nodes recorded before it. One tape per training step, single writer.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, NodeId self)>;

  /// Input or parameter node. Gradients are kept only when requires_grad.
  NodeId leaf(BasicTensor<T> value, bool requires_grad = true);

  /// Result of an operation on earlier nodes.
  NodeId record(BasicTensor<T> value, std::vector<NodeId> inputs, Backward backward);

  const BasicTensor<T>& value(NodeId id) const;
  const std::vector<NodeId>& inputs(NodeId id) const;
  bool requires_grad(NodeId id) const;

  /// Gradient of the last backward() loss w.r.t. `id`; nullptr when the node
  /// is unreachable from the loss or does not require a gradient.
  const BasicTensor<T>* grad(NodeId id) const;

  /// Gradient buffer for in-place accumulation, zero-initialised on first use.
  BasicTensor<T>& grad_buffer(NodeId id);
  void accumulate(NodeId id, const BasicTensor<T>& g);

  /// Seeds d(loss)/d(loss) = 1 and runs every backward rule in reverse order.
  /// Throws ShapeError if the loss is not 1x1x1x1.
  void backward(NodeId loss);

  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }

 private:
  struct Node {
    BasicTensor<T> value;
    std::vector<NodeId> inputs;
    Backward backward;
    bool requires_grad = false;
    std::optional<BasicTensor<T>> grad;
  };
  const Node& node(NodeId id) const;
  Node& node(NodeId id);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace bnfree
