#pragma once

#include <cstdint>
#include <vector>

#include "bnfree/tape.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

inline constexpr double kDefaultBNEpsilon = 1e-5;

/// Per-channel batch-norm state. Epsilon sits inside the square root:
/// y = g * (x - mean) / sqrt(var + eps) + o.
template <typename T>
struct BasicBNParams {
  std::vector<T> gain;
  std::vector<T> shift;
  std::vector<T> mean;  // finalized statistics, valid when `finalized`
  std::vector<T> var;
  double epsilon = kDefaultBNEpsilon;
  bool affine_learned = false;
  bool mean_only = false;
  bool finalized = false;

  /// Gains 1, shifts 0, statistics zeroed and not finalized.
  static BasicBNParams make(int64_t channels, bool affine_learned, bool mean_only = false);

  int64_t channels() const { return static_cast<int64_t>(gain.size()); }
  /// Throws ShapeError/StateError when an invariant is broken.
  void validate() const;
};

using BNParams = BasicBNParams<float>;

/// Biased per-channel statistics over all K*H*W sites of one minibatch.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};

template <typename T>
BatchStats channel_statistics(const BasicTensor<T>& x);

template <typename T>
struct BNTrainResult {
  BasicTensor<T> output;
  BatchStats stats;
};

/// Normalises with the minibatch's own statistics. Throws ShapeError when
/// K*H*W == 1.
template <typename T>
BNTrainResult<T> batch_norm_train(const BasicTensor<T>& x, const BasicBNParams<T>& p);

/// Uses finalized statistics; StateError if they were never finalized.
template <typename T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& x, const BasicBNParams<T>& p);

enum class NormMode { kTrain, kInfer };

template <typename T>
BasicTensor<T> mean_only_bn(const BasicTensor<T>& x, const BasicBNParams<T>& p, NormMode mode);

/// Tape form of batch_norm_train. `gain` and `shift` are (1,1,1,C) nodes;
/// pass non-trainable leaves for the non-affine case. Backward differentiates
/// through the batch mean and variance.
template <typename T>
NodeId batch_norm_train(Tape<T>& tape, NodeId x, NodeId gain, NodeId shift, double epsilon,
                        BatchStats* stats_out = nullptr);

template <typename T>
NodeId batch_norm_infer(Tape<T>& tape, NodeId x, NodeId gain, NodeId shift, const BasicBNParams<T>& p);

template <typename T>
NodeId mean_only_bn(Tape<T>& tape, NodeId x, const BasicBNParams<T>& p, NormMode mode,
                    BatchStats* stats_out = nullptr);

/// Fixed per-channel standardisation (x - mean) / std, e.g. from dataset
/// statistics. Not learned.
template <typename T>
BasicTensor<T> standardize(const BasicTensor<T>& x, const std::vector<T>& mean, const std::vector<T>& stddev);
template <typename T>
NodeId standardize(Tape<T>& tape, NodeId x, const std::vector<T>& mean, const std::vector<T>& stddev);

}  // namespace bnfree
