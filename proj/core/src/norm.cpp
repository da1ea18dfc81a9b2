#include "bnfree/norm.hpp"

#include <cmath>
#include <string>

#include "bnfree/error.hpp"

namespace bnfree {
namespace {

void require_channels(int64_t have, int64_t want, const char* what) {
  if (have != want) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(want) + " channels, got " +
                     std::to_string(have));
  }
}

template <typename T>
void require_degenerate_free(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  if (s.k * s.h * s.w <= 1) {
    throw ShapeError("batch statistics over a single site are degenerate (K*H*W = 1)");
  }
}

template <typename T>
std::vector<double> inv_std(const std::vector<double>& var, double eps) {
  std::vector<double> out(var.size());
  for (size_t c = 0; c < var.size(); ++c) out[c] = 1.0 / std::sqrt(var[c] + eps);
  return out;
}

// Per-channel sums of a and a*b over all sites, in fixed site order.
template <typename T>
void channel_sums(const BasicTensor<T>& a, const BasicTensor<T>* b, std::vector<double>& sum_a,
                  std::vector<double>& sum_ab) {
  const int64_t c_n = a.shape().c;
  const int64_t sites = a.size() / c_n;
  sum_a.assign(static_cast<size_t>(c_n), 0.0);
  sum_ab.assign(static_cast<size_t>(c_n), 0.0);
  for (int64_t i = 0; i < sites; ++i) {
    for (int64_t c = 0; c < c_n; ++c) {
      const double v = a[i * c_n + c];
      sum_a[c] += v;
      if (b) sum_ab[c] += v * (*b)[i * c_n + c];
    }
  }
}

}  // namespace

template <typename T>
BasicBNParams<T> BasicBNParams<T>::make(int64_t channels, bool affine_learned, bool mean_only) {
  if (channels < 1) throw ShapeError("BN needs at least one channel");
  BasicBNParams p;
  const auto n = static_cast<size_t>(channels);
  p.gain.assign(n, T{1});
  p.shift.assign(n, T{0});
  p.mean.assign(n, T{0});
  p.var.assign(n, T{0});
  p.affine_learned = affine_learned;
  p.mean_only = mean_only;
  return p;
}

template <typename T>
void BasicBNParams<T>::validate() const {
  const size_t n = gain.size();
  if (shift.size() != n || mean.size() != n || var.size() != n) {
    throw ShapeError("BN parameter vectors have inconsistent lengths");
  }
  if (!(epsilon > 0.0)) throw ShapeError("BN epsilon must be positive");
  for (size_t c = 0; c < n; ++c) {
    if (var[c] < T{0}) throw ShapeError("BN variance must be non-negative");
    if (!affine_learned && (gain[c] != T{1} || shift[c] != T{0})) {
      throw StateError("non-affine BN must keep gain 1 and shift 0");
    }
  }
}

template <typename T>
BatchStats channel_statistics(const BasicTensor<T>& x) {
  const int64_t c_n = x.shape().c;
  const int64_t sites = x.size() / std::max<int64_t>(c_n, 1);
  BatchStats st;
  std::vector<double> sum, unused;
  channel_sums<T>(x, nullptr, sum, unused);
  st.mean.resize(sum.size());
  for (size_t c = 0; c < sum.size(); ++c) st.mean[c] = sum[c] / static_cast<double>(sites);
  // Two-pass variance.
  st.var.assign(sum.size(), 0.0);
  for (int64_t i = 0; i < sites; ++i) {
    for (int64_t c = 0; c < c_n; ++c) {
      const double d = x[i * c_n + c] - st.mean[c];
      st.var[c] += d * d;
    }
  }
  for (double& v : st.var) v /= static_cast<double>(sites);
  return st;
}

template <typename T>
BNTrainResult<T> batch_norm_train(const BasicTensor<T>& x, const BasicBNParams<T>& p) {
  require_degenerate_free(x);
  require_channels(x.shape().c, p.channels(), "batch_norm_train");
  BNTrainResult<T> r{BasicTensor<T>(x.shape()), channel_statistics(x)};
  const std::vector<double> istd = inv_std<T>(r.stats.var, p.epsilon);
  const int64_t c_n = x.shape().c;
  for (int64_t i = 0; i < x.size(); ++i) {
    const int64_t c = i % c_n;
    r.output[i] = static_cast<T>(p.gain[c] * ((x[i] - r.stats.mean[c]) * istd[c]) + p.shift[c]);
  }
  return r;
}

template <typename T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& x, const BasicBNParams<T>& p) {
  if (!p.finalized) throw StateError("batch_norm_infer: statistics not finalized");
  require_channels(x.shape().c, p.channels(), "batch_norm_infer");
  BasicTensor<T> out(x.shape());
  const int64_t c_n = x.shape().c;
  std::vector<double> scale(static_cast<size_t>(c_n));
  for (int64_t c = 0; c < c_n; ++c) scale[c] = p.gain[c] / std::sqrt(static_cast<double>(p.var[c]) + p.epsilon);
  for (int64_t i = 0; i < x.size(); ++i) {
    const int64_t c = i % c_n;
    out[i] = static_cast<T>((x[i] - static_cast<double>(p.mean[c])) * scale[c] + p.shift[c]);
  }
  return out;
}

template <typename T>
BasicTensor<T> mean_only_bn(const BasicTensor<T>& x, const BasicBNParams<T>& p, NormMode mode) {
  require_channels(x.shape().c, p.channels(), "mean_only_bn");
  std::vector<double> mu(static_cast<size_t>(p.channels()));
  if (mode == NormMode::kTrain) {
    if (x.size() == 0) throw ShapeError("mean_only_bn on an empty batch");
    mu = channel_statistics(x).mean;
  } else {
    if (!p.finalized) throw StateError("mean_only_bn: statistics not finalized");
    for (size_t c = 0; c < mu.size(); ++c) mu[c] = p.mean[c];
  }
  BasicTensor<T> out(x.shape());
  const int64_t c_n = x.shape().c;
  for (int64_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(x[i] - mu[i % c_n]);
  return out;
}

template <typename T>
NodeId batch_norm_train(Tape<T>& tape, NodeId x, NodeId gain, NodeId shift, double epsilon,
                        BatchStats* stats_out) {
  const BasicTensor<T>& xv = tape.value(x);
  require_degenerate_free(xv);
  const int64_t c_n = xv.shape().c;
  require_channels(tape.value(gain).size(), c_n, "batch_norm_train gain");
  require_channels(tape.value(shift).size(), c_n, "batch_norm_train shift");
  if (!(epsilon > 0.0)) throw ShapeError("BN epsilon must be positive");

  BatchStats st = channel_statistics(xv);
  const std::vector<double> istd = inv_std<T>(st.var, epsilon);
  const BasicTensor<T>& g = tape.value(gain);
  const BasicTensor<T>& o = tape.value(shift);
  BasicTensor<T> out(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) {
    const int64_t c = i % c_n;
    out[i] = static_cast<T>(g[c] * ((xv[i] - st.mean[c]) * istd[c]) + o[c]);
  }
  if (stats_out) *stats_out = st;

  return tape.record(std::move(out), {x, gain, shift},
                     [x, gain, shift, mean = st.mean, istd](Tape<T>& t, NodeId self) {
                       const BasicTensor<T>& xv = t.value(x);
                       const BasicTensor<T>& dy = *t.grad(self);
                       const BasicTensor<T>& g = t.value(gain);
                       const int64_t c_n = xv.shape().c;
                       const int64_t sites = xv.size() / c_n;
                       // Normalised activations, recomputed.
                       BasicTensor<T> xhat(xv.shape());
                       for (int64_t i = 0; i < xv.size(); ++i) {
                         const int64_t c = i % c_n;
                         xhat[i] = static_cast<T>((xv[i] - mean[c]) * istd[c]);
                       }
                       std::vector<double> sum_dy, sum_dy_xhat;
                       channel_sums<T>(dy, &xhat, sum_dy, sum_dy_xhat);
                       if (t.requires_grad(x)) {
                         BasicTensor<T>& dx = t.grad_buffer(x);
                         const double m = static_cast<double>(sites);
                         for (int64_t i = 0; i < xv.size(); ++i) {
                           const int64_t c = i % c_n;
                           const double v = dy[i] - sum_dy[c] / m - xhat[i] * (sum_dy_xhat[c] / m);
                           dx[i] += static_cast<T>(g[c] * istd[c] * v);
                         }
                       }
                       if (t.requires_grad(gain)) {
                         BasicTensor<T>& dg = t.grad_buffer(gain);
                         for (int64_t c = 0; c < c_n; ++c) dg[c] += static_cast<T>(sum_dy_xhat[c]);
                       }
                       if (t.requires_grad(shift)) {
                         BasicTensor<T>& db = t.grad_buffer(shift);
                         for (int64_t c = 0; c < c_n; ++c) db[c] += static_cast<T>(sum_dy[c]);
                       }
                     });
}

template <typename T>
NodeId batch_norm_infer(Tape<T>& tape, NodeId x, NodeId gain, NodeId shift, const BasicBNParams<T>& p) {
  if (!p.finalized) throw StateError("batch_norm_infer: statistics not finalized");
  const BasicTensor<T>& xv = tape.value(x);
  const int64_t c_n = xv.shape().c;
  require_channels(c_n, p.channels(), "batch_norm_infer");
  const BasicTensor<T>& g = tape.value(gain);
  const BasicTensor<T>& o = tape.value(shift);
  std::vector<double> istd(static_cast<size_t>(c_n));
  std::vector<double> mean(static_cast<size_t>(c_n));
  for (int64_t c = 0; c < c_n; ++c) {
    istd[c] = 1.0 / std::sqrt(static_cast<double>(p.var[c]) + p.epsilon);
    mean[c] = p.mean[c];
  }
  BasicTensor<T> out(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) {
    const int64_t c = i % c_n;
    out[i] = static_cast<T>((xv[i] - mean[c]) * (g[c] * istd[c]) + o[c]);
  }
  return tape.record(std::move(out), {x, gain, shift}, [x, gain, shift, mean, istd](Tape<T>& t, NodeId self) {
    const BasicTensor<T>& xv = t.value(x);
    const BasicTensor<T>& dy = *t.grad(self);
    const BasicTensor<T>& g = t.value(gain);
    const int64_t c_n = xv.shape().c;
    if (t.requires_grad(x)) {
      BasicTensor<T>& dx = t.grad_buffer(x);
      for (int64_t i = 0; i < xv.size(); ++i) dx[i] += static_cast<T>(dy[i] * g[i % c_n] * istd[i % c_n]);
    }
    if (t.requires_grad(gain) || t.requires_grad(shift)) {
      std::vector<double> dg(static_cast<size_t>(c_n), 0.0), db(static_cast<size_t>(c_n), 0.0);
      for (int64_t i = 0; i < xv.size(); ++i) {
        const int64_t c = i % c_n;
        dg[c] += dy[i] * (xv[i] - mean[c]) * istd[c];
        db[c] += dy[i];
      }
      if (t.requires_grad(gain)) {
        BasicTensor<T>& buf = t.grad_buffer(gain);
        for (int64_t c = 0; c < c_n; ++c) buf[c] += static_cast<T>(dg[c]);
      }
      if (t.requires_grad(shift)) {
        BasicTensor<T>& buf = t.grad_buffer(shift);
        for (int64_t c = 0; c < c_n; ++c) buf[c] += static_cast<T>(db[c]);
      }
    }
  });
}

template <typename T>
NodeId mean_only_bn(Tape<T>& tape, NodeId x, const BasicBNParams<T>& p, NormMode mode, BatchStats* stats_out) {
  const BasicTensor<T>& xv = tape.value(x);
  BasicTensor<T> out = mean_only_bn(xv, p, mode);
  if (stats_out && mode == NormMode::kTrain) {
    *stats_out = channel_statistics(xv);
  }
  return tape.record(std::move(out), {x}, [x, mode](Tape<T>& t, NodeId self) {
    const BasicTensor<T>& dy = *t.grad(self);
    BasicTensor<T>& dx = t.grad_buffer(x);
    if (mode == NormMode::kInfer) {
      for (int64_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      return;
    }
    const int64_t c_n = dy.shape().c;
    const double m = static_cast<double>(dy.size() / c_n);
    std::vector<double> sum_dy, unused;
    channel_sums<T>(dy, nullptr, sum_dy, unused);
    for (int64_t i = 0; i < dy.size(); ++i) dx[i] += static_cast<T>(dy[i] - sum_dy[i % c_n] / m);
  });
}

template <typename T>
BasicTensor<T> standardize(const BasicTensor<T>& x, const std::vector<T>& mean, const std::vector<T>& stddev) {
  const int64_t c_n = x.shape().c;
  require_channels(static_cast<int64_t>(mean.size()), c_n, "standardize mean");
  require_channels(static_cast<int64_t>(stddev.size()), c_n, "standardize std");
  for (T s : stddev) {
    if (!(s > T{0})) throw ShapeError("standardize needs positive standard deviations");
  }
  BasicTensor<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const int64_t c = i % c_n;
    out[i] = (x[i] - mean[c]) / stddev[c];
  }
  return out;
}

template <typename T>
NodeId standardize(Tape<T>& tape, NodeId x, const std::vector<T>& mean, const std::vector<T>& stddev) {
  BasicTensor<T> out = standardize(tape.value(x), mean, stddev);
  return tape.record(std::move(out), {x}, [x, stddev](Tape<T>& t, NodeId self) {
    const BasicTensor<T>& dy = *t.grad(self);
    BasicTensor<T>& dx = t.grad_buffer(x);
    const int64_t c_n = dy.shape().c;
    for (int64_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] / stddev[i % c_n];
  });
}

#define BNFREE_INSTANTIATE_NORM(T)                                                                  \
  template struct BasicBNParams<T>;                                                                 \
  template BatchStats channel_statistics(const BasicTensor<T>&);                                    \
  template BNTrainResult<T> batch_norm_train(const BasicTensor<T>&, const BasicBNParams<T>&);       \
  template BasicTensor<T> batch_norm_infer(const BasicTensor<T>&, const BasicBNParams<T>&);         \
  template BasicTensor<T> mean_only_bn(const BasicTensor<T>&, const BasicBNParams<T>&, NormMode);   \
  template NodeId batch_norm_train(Tape<T>&, NodeId, NodeId, NodeId, double, BatchStats*);          \
  template NodeId batch_norm_infer(Tape<T>&, NodeId, NodeId, NodeId, const BasicBNParams<T>&);      \
  template NodeId mean_only_bn(Tape<T>&, NodeId, const BasicBNParams<T>&, NormMode, BatchStats*);   \
  template BasicTensor<T> standardize(const BasicTensor<T>&, const std::vector<T>&, const std::vector<T>&); \
  template NodeId standardize(Tape<T>&, NodeId, const std::vector<T>&, const std::vector<T>&);

BNFREE_INSTANTIATE_NORM(float)
BNFREE_INSTANTIATE_NORM(double)

}  // namespace bnfree
