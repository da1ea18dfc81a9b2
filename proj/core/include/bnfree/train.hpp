#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bnfree/augment.hpp"
#include "bnfree/dataset.hpp"
#include "bnfree/model.hpp"
#include "bnfree/network.hpp"
#include "bnfree/optimizer.hpp"

namespace bnfree {

/// Everything that determines one training run. Defaults are the paper's
/// CIFAR recipe.
struct TrainConfig {
  int batch_size = 125;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lr_start = 0.1;
  double lr_end = 1e-5;
  int epochs = 300;

  ModelVariant variant = ModelVariant::kBaseline2;
  std::optional<double> temperature;  // unset: 50 for scale-layer variants, else 1
  bool quantized = false;
  Family family = Family::kCifar;
  int depth = 20;
  double width = 4.0;

  uint64_t seed = 1;
  AugmentConfig augment;
  bool eval_each_epoch = false;
  int threads = 1;

  // Data source: a CIFAR directory, or "synthetic" for the blob task.
  std::string dataset = "synthetic";
  int64_t synthetic_train = 256;
  int64_t synthetic_test = 256;
  int64_t synthetic_size = 32;
  uint64_t synthetic_seed = 7;

  double resolved_temperature() const;
  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Zero-mean Gaussian with standard deviation sqrt(2 / fan_in).
Tensor he_init(const Shape& shape, int64_t fan_in, std::mt19937_64& rng);

/// He-initialises every conv weight (fan_in = R * S * Cin). BN gains and
/// shifts keep their 1 / 0 starting values.
void initialize_weights(Model& model, std::mt19937_64& rng);

/// Builds the configured graph for `train`, sets input standardisation
/// from its statistics and initialises weights from the seed.
Model make_model(const TrainConfig& cfg, const Dataset& train);

/// Averages per-batch statistics of every BN and mean-only BN layer over one
/// in-order pass of `data` with parameters frozen and no augmentation.
/// ShapeError on an empty dataset, StateError if the model has no such layers.
void finalize_bn_statistics(Model& model, const Dataset& data, int batch_size);

struct EvalResult {
  int64_t samples = 0;
  int64_t top1_errors = 0;
  int64_t top5_errors = 0;
  bool has_top5 = false;  // heads with at least 1000 classes

  double top1_error() const;  // percent
  double top5_error() const;
};

/// Deterministic forward over `data` without augmentation, through the
/// packed executor. StateError if BN statistics are not finalized;
/// ShapeError on a class-count mismatch. Batches may be sharded over
/// `threads`; counts combine by integer addition.
EvalResult evaluate(const Model& model, const Dataset& data, int batch_size, int threads = 1);

/// Index of the largest logit in each row of (K, 1, 1, N) logits; the first
/// one wins ties.
std::vector<int> predictions(const Tensor& logits);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_err = 0.0;  // percent, over the epoch's training minibatches
  std::optional<double> test_err;

  /// "epoch=.. lr=.. train_loss=.. train_err=.. test_err=.." with fixed
  /// formatting; test_err prints "na" when absent.
  std::string to_line() const;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> metrics;
};

/// Learning rate used during epoch index e in [0, epochs): the cosine
/// schedule stretched so the first epoch uses lr_start and the last lr_end.
double epoch_lr(const TrainConfig& cfg, int epoch_index);

/// Seeded shuffle, minibatch SGD with the cosine schedule, statistics
/// finalization after the last epoch and a final test evaluation.
/// Throws DivergenceError with the epoch and step of a non-finite loss.
TrainResult train(Model model, const TrainConfig& cfg, const DatasetSplits& data,
                  const EpochCallback& on_epoch = {});
TrainResult train(const TrainConfig& cfg, const DatasetSplits& data, const EpochCallback& on_epoch = {});

/// Loads the configured dataset (CIFAR directory or synthetic blobs).
DatasetSplits load_dataset(const TrainConfig& cfg);

}  // namespace bnfree
