#include "bnfree/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bnfree/error.hpp"

namespace bnfree {

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  const Shape& s = logits.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("softmax expects (K,1,1,N) logits, got " + s.str());
  if (s.c < 2) throw ShapeError("softmax needs at least two classes");
  BasicTensor<T> p(s);
  for (int64_t k = 0; k < s.k; ++k) {
    const T* z = logits.ptr() + k * s.c;
    const double zmax = *std::max_element(z, z + s.c);
    double total = 0.0;
    for (int64_t i = 0; i < s.c; ++i) total += std::exp(z[i] - zmax);
    for (int64_t i = 0; i < s.c; ++i) p[k * s.c + i] = static_cast<T>(std::exp(z[i] - zmax) / total);
  }
  return p;
}

std::vector<double> temperature_softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ShapeError("temperature must be positive");
  if (logits.empty()) return {};
  std::vector<double> scaled(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
  const double zmax = *std::max_element(scaled.begin(), scaled.end());
  double total = 0.0;
  for (double& v : scaled) {
    v = std::exp(v - zmax);
    total += v;
  }
  for (double& v : scaled) v /= total;
  return scaled;
}

double shannon_entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

template <typename T>
XentResult<T> softmax_xent(Tape<T>& tape, NodeId logits, std::span<const int> labels) {
  const BasicTensor<T>& z = tape.value(logits);
  BasicTensor<T> p = softmax(z);
  const int64_t k_n = z.shape().k;
  const int64_t n = z.shape().c;
  if (static_cast<int64_t>(labels.size()) != k_n) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(k_n));
  }
  double loss = 0.0;
  for (int64_t k = 0; k < k_n; ++k) {
    const int y = labels[static_cast<size_t>(k)];
    if (y < 0 || y >= n) throw ShapeError("label " + std::to_string(y) + " out of range");
    // log-sum-exp form keeps -log p finite when p underflows.
    const T* zk = z.ptr() + k * n;
    const double zmax = *std::max_element(zk, zk + n);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) total += std::exp(zk[i] - zmax);
    loss += std::log(total) + zmax - zk[y];
  }
  loss /= static_cast<double>(k_n);

  std::vector<int> label_copy(labels.begin(), labels.end());
  const NodeId node = tape.record(
      BasicTensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(loss)), {logits},
      [logits, probs = p, label_copy = std::move(label_copy)](Tape<T>& t, NodeId self) {
        const T g = (*t.grad(self))[0];
        BasicTensor<T>& dz = t.grad_buffer(logits);
        const int64_t k_n = probs.shape().k;
        const int64_t n = probs.shape().c;
        const T scale = g / static_cast<T>(k_n);
        for (int64_t k = 0; k < k_n; ++k) {
          for (int64_t i = 0; i < n; ++i) {
            const T onehot = (i == label_copy[static_cast<size_t>(k)]) ? T{1} : T{0};
            dz[k * n + i] += (probs[k * n + i] - onehot) * scale;
          }
        }
      });
  return XentResult<T>{node, std::move(p)};
}

template BasicTensor<float> softmax(const BasicTensor<float>&);
template BasicTensor<double> softmax(const BasicTensor<double>&);
template XentResult<float> softmax_xent(Tape<float>&, NodeId, std::span<const int>);
template XentResult<double> softmax_xent(Tape<double>&, NodeId, std::span<const int>);

}  // namespace bnfree
