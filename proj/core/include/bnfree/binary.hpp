#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bnfree/ops.hpp"
#include "bnfree/tape.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

/// He-initialisation standard deviation sqrt(2 / fan_in). This is also the
/// constant scale applied to the signs of 1-bit weights.
double he_std(int64_t fan_in);

/// Per-layer 1-bit settings. sigma0 is fixed when the layer is created and
/// never updated by training.
struct QuantSpec {
  double sigma0 = 1.0;
  bool enabled = false;

  /// fan_in = R * S * Cin of the layer.
  static QuantSpec for_fan_in(int64_t fan_in, bool enabled) { return {he_std(fan_in), enabled}; }
};

/// sigma0 * sign(w) elementwise with sign(0) = +1. The input stays the
/// full-precision shadow copy.
template <typename T>
BasicTensor<T> binarize_forward(const BasicTensor<T>& w, double sigma0);

/// Straight-through estimator: d/d(shadow) = sigma0 * grad_out. No clipping.
template <typename T>
BasicTensor<T> binarize_backward(const BasicTensor<T>& grad_out, double sigma0);

/// Tape op pairing binarize_forward with binarize_backward.
template <typename T>
NodeId binarize(Tape<T>& tape, NodeId shadow, double sigma0);

/// 1-bit filter bank. Bit i (LSB-first inside each byte, weights enumerated
/// in (R, S, Cin, Cout) row-major order) is 1 iff the weight is >= 0.
/// Padding bits in the last byte are zero.
class PackedConvWeights {
 public:
  PackedConvWeights(Shape shape, std::vector<uint8_t> bits, double sigma0);

  const Shape& shape() const { return shape_; }
  double sigma0() const { return sigma0_; }
  int64_t count() const { return shape_.size(); }
  std::span<const uint8_t> bits() const { return bits_; }
  bool positive(int64_t i) const { return (bits_[static_cast<size_t>(i >> 3)] >> (i & 7)) & 1u; }

  /// sigma0 * (+1 / -1) per weight.
  Tensor unpack() const;

  friend bool operator==(const PackedConvWeights&, const PackedConvWeights&) = default;

 private:
  Shape shape_;
  std::vector<uint8_t> bits_;
  double sigma0_;
};

/// Bytes needed for `count` sign bits.
constexpr int64_t packed_bytes(int64_t count) { return (count + 7) / 8; }

PackedConvWeights pack_weights(const Tensor& w, double sigma0);

/// Multiplier-free convolution: each output element accumulates input values
/// added or subtracted by the sign bit, then is multiplied once by sigma0.
Tensor packed_conv2d(const Tensor& input, const PackedConvWeights& weights, int stride, Padding pad);

}  // namespace bnfree
