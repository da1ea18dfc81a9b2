#pragma once

#include "bnfree/tape.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

// Elementwise activations. At a kink the backward pass uses the
// right-derivative, so relu'(0) = 1 and srelu'(-1) = 1.

/// max(0, x)
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
NodeId relu(Tape<T>& tape, NodeId x);

/// Shifted ReLU, max(-1, x).
template <typename T>
BasicTensor<T> srelu(const BasicTensor<T>& x);
template <typename T>
NodeId srelu(Tape<T>& tape, NodeId x);

/// x for x >= 0, exp(x) - 1 otherwise.
template <typename T>
BasicTensor<T> elu(const BasicTensor<T>& x);
template <typename T>
NodeId elu(Tape<T>& tape, NodeId x);

/// Constant scale layer, x / temperature, same constant for every channel.
/// Throws ShapeError unless temperature > 0.
template <typename T>
BasicTensor<T> scale_layer(const BasicTensor<T>& x, double temperature);
template <typename T>
NodeId scale_layer(Tape<T>& tape, NodeId x, double temperature);

}  // namespace bnfree
