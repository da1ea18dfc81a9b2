#include "bnfree/binary.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "bnfree/error.hpp"

namespace bnfree {

double he_std(int64_t fan_in) {
  if (fan_in < 1) throw ShapeError("fan_in must be >= 1, got " + std::to_string(fan_in));
  return std::sqrt(2.0 / static_cast<double>(fan_in));
}

template <typename T>
BasicTensor<T> binarize_forward(const BasicTensor<T>& w, double sigma0) {
  if (!(sigma0 > 0.0)) throw ShapeError("sigma0 must be positive");
  const T pos = static_cast<T>(sigma0);
  BasicTensor<T> out(w.shape());
  for (int64_t i = 0; i < w.size(); ++i) out[i] = w[i] >= T{0} ? pos : -pos;
  return out;
}

template <typename T>
BasicTensor<T> binarize_backward(const BasicTensor<T>& grad_out, double sigma0) {
  const T s = static_cast<T>(sigma0);
  BasicTensor<T> out(grad_out.shape());
  for (int64_t i = 0; i < grad_out.size(); ++i) out[i] = s * grad_out[i];
  return out;
}

template <typename T>
NodeId binarize(Tape<T>& tape, NodeId shadow, double sigma0) {
  return tape.record(binarize_forward(tape.value(shadow), sigma0), {shadow},
                     [shadow, sigma0](Tape<T>& t, NodeId self) {
                       t.accumulate(shadow, binarize_backward(*t.grad(self), sigma0));
                     });
}

template BasicTensor<float> binarize_forward(const BasicTensor<float>&, double);
template BasicTensor<double> binarize_forward(const BasicTensor<double>&, double);
template BasicTensor<float> binarize_backward(const BasicTensor<float>&, double);
template BasicTensor<double> binarize_backward(const BasicTensor<double>&, double);
template NodeId binarize(Tape<float>&, NodeId, double);
template NodeId binarize(Tape<double>&, NodeId, double);

PackedConvWeights::PackedConvWeights(Shape shape, std::vector<uint8_t> bits, double sigma0)
    : shape_(shape), bits_(std::move(bits)), sigma0_(sigma0) {
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw ShapeError("sigma0 must be positive and finite");
  if (static_cast<int64_t>(bits_.size()) != packed_bytes(shape.size())) {
    throw ShapeError("packed payload of " + std::to_string(bits_.size()) + " bytes does not fit " +
                     shape.str());
  }
  const int64_t tail = shape.size() % 8;
  if (tail != 0 && (bits_.back() >> tail) != 0) throw ShapeError("packed padding bits must be zero");
}

Tensor PackedConvWeights::unpack() const {
  Tensor w(shape_);
  const float pos = static_cast<float>(sigma0_);
  for (int64_t i = 0; i < count(); ++i) w[i] = positive(i) ? pos : -pos;
  return w;
}

PackedConvWeights pack_weights(const Tensor& w, double sigma0) {
  std::vector<uint8_t> bits(static_cast<size_t>(packed_bytes(w.size())), 0);
  for (int64_t i = 0; i < w.size(); ++i) {
    if (w[i] >= 0.0f) bits[static_cast<size_t>(i >> 3)] |= static_cast<uint8_t>(1u << (i & 7));
  }
  return PackedConvWeights(w.shape(), std::move(bits), sigma0);
}

Tensor packed_conv2d(const Tensor& input, const PackedConvWeights& weights, int stride, Padding pad) {
  const Shape& in = input.shape();
  const Shape& ws = weights.shape();
  if (stride <= 0) throw ShapeError("packed_conv2d stride must be positive");
  if (in.c != ws.w) {
    throw ShapeError("packed_conv2d channel mismatch: input has " + std::to_string(in.c) +
                     " channels, filter expects " + std::to_string(ws.w));
  }
  const WindowGeometry g = WindowGeometry::make(in.h, in.w, ws.k, ws.h, stride, pad);
  const int64_t cout = ws.c;
  Tensor out(Shape{in.k, g.out_h, g.out_w, cout});
  const float scale = static_cast<float>(weights.sigma0());
  // Sign bit to XOR into an input value for each weight: 0 keeps it, 0x80000000 negates it.
  std::vector<uint32_t> flip(static_cast<size_t>(weights.count()));
  for (int64_t i = 0; i < weights.count(); ++i) flip[static_cast<size_t>(i)] = weights.positive(i) ? 0u : 0x80000000u;
  std::vector<float> acc(static_cast<size_t>(cout));
  for (int64_t k = 0; k < in.k; ++k) {
    for (int64_t oh = 0; oh < g.out_h; ++oh) {
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        std::fill(acc.begin(), acc.end(), 0.0f);
        for (int64_t r = 0; r < ws.k; ++r) {
          const int64_t ih = oh * stride + r - g.pad_top;
          if (ih < 0 || ih >= in.h) continue;
          for (int64_t s = 0; s < ws.h; ++s) {
            const int64_t iw = ow * stride + s - g.pad_left;
            if (iw < 0 || iw >= in.w) continue;
            const float* x = input.ptr() + input.offset(k, ih, iw, 0);
            for (int64_t ci = 0; ci < in.c; ++ci) {
              const uint32_t v = std::bit_cast<uint32_t>(x[ci]);
              const uint32_t* f = flip.data() + ((r * ws.h + s) * ws.w + ci) * cout;
              float* a = acc.data();
              for (int64_t co = 0; co < cout; ++co) a[co] += std::bit_cast<float>(v ^ f[co]);
            }
          }
        }
        float* dst = out.ptr() + out.offset(k, oh, ow, 0);
        for (int64_t co = 0; co < cout; ++co) dst[co] = acc[co] * scale;
      }
    }
  }
  return out;
}

}  // namespace bnfree
