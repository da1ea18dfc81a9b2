#include "bnfree/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "bnfree/error.hpp"

namespace bnfree {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Rows of the im2col matrix processed per GEMM call.
constexpr int64_t kTargetRows = 4096;

struct ConvPlan {
  Shape in;
  int64_t r, s, cout;
  int stride;
  WindowGeometry geo;
  int64_t patch() const { return r * s * in.c; }
  int64_t out_sites() const { return geo.out_h * geo.out_w; }
  bool is_pointwise() const { return r == 1 && s == 1 && stride == 1 && geo.pad_top == 0; }
  int64_t chunk() const { return std::max<int64_t>(1, kTargetRows / std::max<int64_t>(1, out_sites())); }
};

template <typename T>
ConvPlan plan_conv(const BasicTensor<T>& input, const BasicTensor<T>& weights, int stride, Padding pad) {
  const Shape& in = input.shape();
  const Shape& ws = weights.shape();
  if (stride <= 0) throw ShapeError("conv2d stride must be positive, got " + std::to_string(stride));
  if (ws.c <= 0 || ws.k <= 0 || ws.h <= 0) throw ShapeError("conv2d empty filter " + ws.str());
  if (in.c != ws.w) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(in.c) +
                     " channels, filter expects " + std::to_string(ws.w));
  }
  ConvPlan p{in, ws.k, ws.h, ws.c, stride, WindowGeometry::make(in.h, in.w, ws.k, ws.h, stride, pad)};
  return p;
}

// Gathers receptive fields of samples [k0, k0 + n) into rows of `cols`.
template <typename T>
void im2col(const BasicTensor<T>& x, const ConvPlan& p, int64_t k0, int64_t n, T* cols) {
  const int64_t cin = p.in.c;
  int64_t row = 0;
  for (int64_t k = k0; k < k0 + n; ++k) {
    for (int64_t oh = 0; oh < p.geo.out_h; ++oh) {
      for (int64_t ow = 0; ow < p.geo.out_w; ++ow, ++row) {
        T* dst = cols + row * p.patch();
        for (int64_t i = 0; i < p.r; ++i) {
          const int64_t ih = oh * p.stride + i - p.geo.pad_top;
          for (int64_t j = 0; j < p.s; ++j, dst += cin) {
            const int64_t iw = ow * p.stride + j - p.geo.pad_left;
            if (ih < 0 || ih >= p.in.h || iw < 0 || iw >= p.in.w) {
              std::fill(dst, dst + cin, T{0});
            } else {
              const T* src = x.ptr() + x.offset(k, ih, iw, 0);
              std::copy(src, src + cin, dst);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvPlan& p, int64_t k0, int64_t n, BasicTensor<T>& dx) {
  const int64_t cin = p.in.c;
  int64_t row = 0;
  for (int64_t k = k0; k < k0 + n; ++k) {
    for (int64_t oh = 0; oh < p.geo.out_h; ++oh) {
      for (int64_t ow = 0; ow < p.geo.out_w; ++ow, ++row) {
        const T* src = cols + row * p.patch();
        for (int64_t i = 0; i < p.r; ++i) {
          const int64_t ih = oh * p.stride + i - p.geo.pad_top;
          for (int64_t j = 0; j < p.s; ++j, src += cin) {
            const int64_t iw = ow * p.stride + j - p.geo.pad_left;
            if (ih < 0 || ih >= p.in.h || iw < 0 || iw >= p.in.w) continue;
            T* dst = dx.ptr() + dx.offset(k, ih, iw, 0);
            for (int64_t c = 0; c < cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + " shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

WindowGeometry WindowGeometry::make(int64_t in_h, int64_t in_w, int64_t kernel_h, int64_t kernel_w,
                                    int stride, Padding pad) {
  if (stride <= 0) throw ShapeError("stride must be positive");
  WindowGeometry g;
  if (pad.mode == Padding::Mode::kSame) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    g.pad_top = std::max<int64_t>((g.out_h - 1) * stride + kernel_h - in_h, 0) / 2;
    g.pad_left = std::max<int64_t>((g.out_w - 1) * stride + kernel_w - in_w, 0) / 2;
  } else {
    if (pad.amount < 0) throw ShapeError("negative padding");
    g.out_h = (in_h + 2 * pad.amount - kernel_h) / stride + 1;
    g.out_w = (in_w + 2 * pad.amount - kernel_w) / stride + 1;
    g.pad_top = pad.amount;
    g.pad_left = pad.amount;
  }
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeError("window larger than padded input");
  return g;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, int stride,
                      Padding pad) {
  const ConvPlan p = plan_conv(input, weights, stride, pad);
  BasicTensor<T> out(Shape{p.in.k, p.geo.out_h, p.geo.out_w, p.cout});
  ConstMatrixMap<T> wmat(weights.ptr(), p.patch(), p.cout);
  const int64_t sites = p.out_sites();
  if (p.is_pointwise()) {
    const int64_t rows = p.in.k * sites;
    MatrixMap<T>(out.ptr(), rows, p.cout).noalias() = ConstMatrixMap<T>(input.ptr(), rows, p.in.c) * wmat;
    return out;
  }
  const int64_t chunk = p.chunk();
  std::vector<T> cols(static_cast<size_t>(std::min(chunk, p.in.k) * sites * p.patch()));
  for (int64_t k0 = 0; k0 < p.in.k; k0 += chunk) {
    const int64_t n = std::min(chunk, p.in.k - k0);
    im2col(input, p, k0, n, cols.data());
    MatrixMap<T> dst(out.ptr() + k0 * sites * p.cout, n * sites, p.cout);
    dst.noalias() = ConstMatrixMap<T>(cols.data(), n * sites, p.patch()) * wmat;
  }
  return out;
}

template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& grad_out, int stride, Padding pad,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weights) {
  const ConvPlan p = plan_conv(input, weights, stride, pad);
  const int64_t sites = p.out_sites();
  if (grad_out.shape() != Shape{p.in.k, p.geo.out_h, p.geo.out_w, p.cout}) {
    throw ShapeError("conv2d_backward: upstream gradient shape " + grad_out.shape().str());
  }
  ConstMatrixMap<T> wmat(weights.ptr(), p.patch(), p.cout);
  if (grad_weights) *grad_weights = BasicTensor<T>(weights.shape());
  if (grad_input) *grad_input = BasicTensor<T>(input.shape());

  if (p.is_pointwise()) {
    const int64_t rows = p.in.k * sites;
    ConstMatrixMap<T> g(grad_out.ptr(), rows, p.cout);
    if (grad_weights) {
      MatrixMap<T>(grad_weights->ptr(), p.patch(), p.cout).noalias() =
          ConstMatrixMap<T>(input.ptr(), rows, p.in.c).transpose() * g;
    }
    if (grad_input) {
      MatrixMap<T>(grad_input->ptr(), rows, p.in.c).noalias() = g * wmat.transpose();
    }
    return;
  }

  const int64_t chunk = p.chunk();
  std::vector<T> cols(static_cast<size_t>(std::min(chunk, p.in.k) * sites * p.patch()));
  for (int64_t k0 = 0; k0 < p.in.k; k0 += chunk) {
    const int64_t n = std::min(chunk, p.in.k - k0);
    ConstMatrixMap<T> g(grad_out.ptr() + k0 * sites * p.cout, n * sites, p.cout);
    if (grad_weights) {
      im2col(input, p, k0, n, cols.data());
      MatrixMap<T>(grad_weights->ptr(), p.patch(), p.cout).noalias() +=
          ConstMatrixMap<T>(cols.data(), n * sites, p.patch()).transpose() * g;
    }
    if (grad_input) {
      MatrixMap<T> dcols(cols.data(), n * sites, p.patch());
      dcols.noalias() = g * wmat.transpose();
      col2im_add(cols.data(), p, k0, n, *grad_input);
    }
  }
}

template <typename T>
NodeId conv2d(Tape<T>& tape, NodeId input, NodeId weights, int stride, Padding pad) {
  BasicTensor<T> out = conv2d(tape.value(input), tape.value(weights), stride, pad);
  return tape.record(std::move(out), {input, weights}, [input, weights, stride, pad](Tape<T>& t, NodeId self) {
    const bool need_x = t.requires_grad(input);
    const bool need_w = t.requires_grad(weights);
    BasicTensor<T> gx, gw;
    conv2d_backward(t.value(input), t.value(weights), *t.grad(self), stride, pad, need_x ? &gx : nullptr,
                    need_w ? &gw : nullptr);
    if (need_x) t.accumulate(input, gx);
    if (need_w) t.accumulate(weights, gw);
  });
}

template <typename T>
NodeId add(Tape<T>& tape, NodeId a, NodeId b) {
  const BasicTensor<T>& va = tape.value(a);
  const BasicTensor<T>& vb = tape.value(b);
  require_same_shape(va, vb, "add");
  BasicTensor<T> out = va;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, NodeId self) {
    const BasicTensor<T>& g = *t.grad(self);
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
BasicTensor<T> global_average_pool(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("global_average_pool on empty spatial extent");
  BasicTensor<T> out(Shape{s.k, 1, 1, s.c});
  std::vector<double> acc(static_cast<size_t>(s.c));
  for (int64_t k = 0; k < s.k; ++k) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* src = x.ptr() + x.offset(k, 0, 0, 0);
    for (int64_t i = 0; i < s.spatial(); ++i) {
      for (int64_t c = 0; c < s.c; ++c) acc[c] += src[i * s.c + c];
    }
    for (int64_t c = 0; c < s.c; ++c) out.at(k, 0, 0, c) = static_cast<T>(acc[c] / static_cast<double>(s.spatial()));
  }
  return out;
}

template <typename T>
NodeId global_average_pool(Tape<T>& tape, NodeId x) {
  return tape.record(global_average_pool(tape.value(x)), {x}, [x](Tape<T>& t, NodeId self) {
    const Shape s = t.value(x).shape();
    const BasicTensor<T>& g = *t.grad(self);
    BasicTensor<T>& gx = t.grad_buffer(x);
    const T inv = T{1} / static_cast<T>(s.spatial());
    for (int64_t k = 0; k < s.k; ++k) {
      T* dst = gx.ptr() + gx.offset(k, 0, 0, 0);
      for (int64_t i = 0; i < s.spatial(); ++i) {
        for (int64_t c = 0; c < s.c; ++c) dst[i * s.c + c] += g.at(k, 0, 0, c) * inv;
      }
    }
  });
}

namespace {

// Forward max pool; `argmax` receives the flat input index chosen per output.
template <typename T>
BasicTensor<T> max_pool_impl(const BasicTensor<T>& x, int window, int stride, Padding pad,
                             std::vector<int64_t>* argmax) {
  if (window <= 0) throw ShapeError("max_pool window must be positive");
  const Shape& s = x.shape();
  const WindowGeometry g = WindowGeometry::make(s.h, s.w, window, window, stride, pad);
  BasicTensor<T> out(Shape{s.k, g.out_h, g.out_w, s.c});
  if (argmax) argmax->assign(static_cast<size_t>(out.size()), -1);
  int64_t o = 0;
  for (int64_t k = 0; k < s.k; ++k) {
    for (int64_t oh = 0; oh < g.out_h; ++oh) {
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        for (int64_t c = 0; c < s.c; ++c, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_i = -1;
          for (int i = 0; i < window; ++i) {
            const int64_t ih = oh * stride + i - g.pad_top;
            if (ih < 0 || ih >= s.h) continue;
            for (int j = 0; j < window; ++j) {
              const int64_t iw = ow * stride + j - g.pad_left;
              if (iw < 0 || iw >= s.w) continue;
              const int64_t idx = x.offset(k, ih, iw, c);
              if (best_i < 0 || x[idx] > best) {
                best = x[idx];
                best_i = idx;
              }
            }
          }
          out[o] = best;
          if (argmax) (*argmax)[static_cast<size_t>(o)] = best_i;
        }
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> max_pool(const BasicTensor<T>& x, int window, int stride, Padding pad) {
  return max_pool_impl(x, window, stride, pad, nullptr);
}

template <typename T>
NodeId max_pool(Tape<T>& tape, NodeId x, int window, int stride, Padding pad) {
  std::vector<int64_t> argmax;
  BasicTensor<T> out = max_pool_impl(tape.value(x), window, stride, pad, &argmax);
  return tape.record(std::move(out), {x}, [x, argmax = std::move(argmax)](Tape<T>& t, NodeId self) {
    const BasicTensor<T>& g = *t.grad(self);
    BasicTensor<T>& gx = t.grad_buffer(x);
    for (size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[static_cast<int64_t>(o)];
  });
}

namespace {

template <typename T>
void check_shortcut(const Shape& s, int stride, int64_t out_channels) {
  if (stride != 1 && stride != 2) throw ShapeError("shortcut stride must be 1 or 2");
  if (out_channels < s.c) throw ShapeError("shortcut cannot drop channels");
}

}  // namespace

template <typename T>
BasicTensor<T> shortcut_downsample(const BasicTensor<T>& x, int stride, int64_t out_channels) {
  const Shape& s = x.shape();
  check_shortcut<T>(s, stride, out_channels);
  const int64_t oh_n = (s.h + stride - 1) / stride;
  const int64_t ow_n = (s.w + stride - 1) / stride;
  BasicTensor<T> out(Shape{s.k, oh_n, ow_n, out_channels});
  for (int64_t k = 0; k < s.k; ++k) {
    for (int64_t oh = 0; oh < oh_n; ++oh) {
      for (int64_t ow = 0; ow < ow_n; ++ow) {
        const int64_t h_end = std::min(s.h, oh * stride + stride);
        const int64_t w_end = std::min(s.w, ow * stride + stride);
        const T count = static_cast<T>((h_end - oh * stride) * (w_end - ow * stride));
        for (int64_t c = 0; c < s.c; ++c) {
          T acc{0};
          for (int64_t ih = oh * stride; ih < h_end; ++ih) {
            for (int64_t iw = ow * stride; iw < w_end; ++iw) acc += x.at(k, ih, iw, c);
          }
          out.at(k, oh, ow, c) = acc / count;
        }
      }
    }
  }
  return out;
}

template <typename T>
NodeId shortcut_downsample(Tape<T>& tape, NodeId x, int stride, int64_t out_channels) {
  BasicTensor<T> out = shortcut_downsample(tape.value(x), stride, out_channels);
  return tape.record(std::move(out), {x}, [x, stride](Tape<T>& t, NodeId self) {
    const Shape s = t.value(x).shape();
    const BasicTensor<T>& g = *t.grad(self);
    BasicTensor<T>& gx = t.grad_buffer(x);
    for (int64_t k = 0; k < s.k; ++k) {
      for (int64_t ih = 0; ih < s.h; ++ih) {
        for (int64_t iw = 0; iw < s.w; ++iw) {
          const int64_t oh = ih / stride;
          const int64_t ow = iw / stride;
          const int64_t h_end = std::min(s.h, oh * stride + stride);
          const int64_t w_end = std::min(s.w, ow * stride + stride);
          const T count = static_cast<T>((h_end - oh * stride) * (w_end - ow * stride));
          for (int64_t c = 0; c < s.c; ++c) gx.at(k, ih, iw, c) += g.at(k, oh, ow, c) / count;
        }
      }
    }
  });
}

template <typename T>
NodeId sum(Tape<T>& tape, NodeId x) {
  double acc = 0.0;
  for (T v : tape.value(x).data()) acc += v;
  BasicTensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc));
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, NodeId self) {
    const T g = (*t.grad(self))[0];
    BasicTensor<T>& gx = t.grad_buffer(x);
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename T>
NodeId weighted_sum(Tape<T>& tape, NodeId x, const BasicTensor<T>& weights) {
  require_same_shape(tape.value(x), weights, "weighted_sum");
  double acc = 0.0;
  const BasicTensor<T>& v = tape.value(x);
  for (int64_t i = 0; i < v.size(); ++i) acc += static_cast<double>(v[i]) * weights[i];
  BasicTensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc));
  return tape.record(std::move(out), {x}, [x, weights](Tape<T>& t, NodeId self) {
    const T g = (*t.grad(self))[0];
    BasicTensor<T>& gx = t.grad_buffer(x);
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

#define BNFREE_INSTANTIATE_OPS(T)                                                                  \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, int, Padding);      \
  template void conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                int, Padding, BasicTensor<T>*, BasicTensor<T>*);                   \
  template NodeId conv2d(Tape<T>&, NodeId, NodeId, int, Padding);                                  \
  template NodeId add(Tape<T>&, NodeId, NodeId);                                                   \
  template BasicTensor<T> global_average_pool(const BasicTensor<T>&);                              \
  template NodeId global_average_pool(Tape<T>&, NodeId);                                           \
  template NodeId max_pool(Tape<T>&, NodeId, int, int, Padding);                                   \
  template BasicTensor<T> max_pool(const BasicTensor<T>&, int, int, Padding);                      \
  template NodeId shortcut_downsample(Tape<T>&, NodeId, int, int64_t);                             \
  template BasicTensor<T> shortcut_downsample(const BasicTensor<T>&, int, int64_t);                \
  template NodeId sum(Tape<T>&, NodeId);                                                           \
  template NodeId weighted_sum(Tape<T>&, NodeId, const BasicTensor<T>&);

BNFREE_INSTANTIATE_OPS(float)
BNFREE_INSTANTIATE_OPS(double)

}  // namespace bnfree
