#pragma once

#include <span>
#include <vector>

#include "bnfree/tape.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

/// Row-wise softmax over the channel axis of (K, 1, 1, N) logits, with the
/// row maximum subtracted before exponentiation.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// exp(z_i / T) / sum_j exp(z_j / T) for a single logit vector.
std::vector<double> temperature_softmax(std::span<const double> logits, double temperature);

/// Shannon entropy in nats; zero-probability terms contribute 0.
double shannon_entropy(std::span<const double> probabilities);

template <typename T>
struct XentResult {
  NodeId loss;               // scalar, mean over the batch of -log p[label]
  BasicTensor<T> probabilities;
};

/// Softmax followed by mean cross-entropy against integer labels.
/// Gradient w.r.t. the logits is (p - one_hot) / K.
template <typename T>
XentResult<T> softmax_xent(Tape<T>& tape, NodeId logits, std::span<const int> labels);

}  // namespace bnfree
