#pragma once

#include <cstdint>

#include "bnfree/tape.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

/// Spatial padding rule for convolutions and pooling windows.
struct Padding {
  enum class Mode { kSame, kExplicit };
  Mode mode = Mode::kSame;
  int amount = 0;

  static constexpr Padding same() { return {Mode::kSame, 0}; }
  static constexpr Padding exact(int n) { return {Mode::kExplicit, n}; }
  friend constexpr bool operator==(const Padding&, const Padding&) = default;
};

/// Output extent and leading padding of a windowed op. "Same" padding yields
/// ceil(H / stride) rows with the odd pad row placed at the bottom.
struct WindowGeometry {
  int64_t out_h = 0;
  int64_t out_w = 0;
  int64_t pad_top = 0;
  int64_t pad_left = 0;

  static WindowGeometry make(int64_t in_h, int64_t in_w, int64_t kernel_h, int64_t kernel_w,
                             int stride, Padding pad);
};

// Convolution without bias. Weights are (R, S, Cin, Cout); zero padding.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, int stride,
                      Padding pad);

/// Gradients of conv2d. Either output pointer may be null to skip that half.
template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& grad_out, int stride, Padding pad,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weights);

template <typename T>
NodeId conv2d(Tape<T>& tape, NodeId input, NodeId weights, int stride, Padding pad);

template <typename T>
NodeId add(Tape<T>& tape, NodeId a, NodeId b);

/// Spatial mean per channel: (K, H, W, C) -> (K, 1, 1, C).
template <typename T>
BasicTensor<T> global_average_pool(const BasicTensor<T>& x);
template <typename T>
NodeId global_average_pool(Tape<T>& tape, NodeId x);

/// Max over a window; padded sites never win. Gradient goes to the first
/// maximal site in window scan order.
template <typename T>
NodeId max_pool(Tape<T>& tape, NodeId x, int window, int stride, Padding pad);
template <typename T>
BasicTensor<T> max_pool(const BasicTensor<T>& x, int window, int stride, Padding pad);

/// Parameter-free residual shortcut: 2x2 average pool with stride 2 when
/// `stride` is 2 (partial windows average their valid sites), then zero-fill
/// of channels [C, out_channels).
template <typename T>
NodeId shortcut_downsample(Tape<T>& tape, NodeId x, int stride, int64_t out_channels);
template <typename T>
BasicTensor<T> shortcut_downsample(const BasicTensor<T>& x, int stride, int64_t out_channels);

/// Scalar sum of all entries; test and gradient-check helper.
template <typename T>
NodeId sum(Tape<T>& tape, NodeId x);

/// Sum of elementwise product with a constant tensor; projects a tensor
/// output to a scalar with non-uniform sensitivities.
template <typename T>
NodeId weighted_sum(Tape<T>& tape, NodeId x, const BasicTensor<T>& weights);

}  // namespace bnfree
