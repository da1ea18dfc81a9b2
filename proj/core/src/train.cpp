#include "bnfree/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "bnfree/error.hpp"
#include "denormals.hpp"
#include "bnfree/rng.hpp"
#include "bnfree/softmax.hpp"

namespace bnfree {
namespace {

Tensor make_batch(const Dataset& data, std::span<const int64_t> indices, const AugmentConfig* aug,
                  std::mt19937_64* rng) {
  if (!aug) return to_tensor(data, indices);
  Tensor t(Shape{static_cast<int64_t>(indices.size()), data.height, data.width, Dataset::kChannels});
  const int64_t n = data.image_bytes();
  for (size_t k = 0; k < indices.size(); ++k) {
    const std::vector<uint8_t> img = augment(data.image(indices[k]), data.height, data.width, *rng, *aug);
    float* dst = t.ptr() + static_cast<int64_t>(k) * n;
    for (int64_t j = 0; j < n; ++j) dst[j] = static_cast<float>(img[static_cast<size_t>(j)]) / 255.0f;
  }
  return t;
}

std::vector<int> gather_labels(const Dataset& data, std::span<const int64_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int64_t i : indices) out.push_back(data.labels[static_cast<size_t>(i)]);
  return out;
}

bool augmentation_enabled(const AugmentConfig& a) { return a.crop || a.flip || a.cutout; }

// True when the cutout patch blanks the whole image wherever its centre lands.
bool cutout_covers_image(int size, int64_t side) {
  const int64_t half = size / 2;
  return half >= side - 1 && size - half >= side;
}

}  // namespace

double TrainConfig::resolved_temperature() const {
  if (temperature) return *temperature;
  return uses_temperature(variant) ? kDefaultTemperature : 1.0;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(lr_end > 0.0) || !(lr_start > lr_end)) throw ConfigError("need lr_start > lr_end > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  const bool batch_stats = variant == ModelVariant::kBaseline1 || variant == ModelVariant::kBaseline2 ||
                           variant == ModelVariant::kFinalBNOnly || variant == ModelVariant::kMeanOnlyFinal;
  if (batch_stats && batch_size < 2) throw ConfigError("batch_size must be at least 2 with batch statistics");
  if (!(momentum >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("momentum and weight_decay must be >= 0");
  if (!(resolved_temperature() > 0.0)) throw ConfigError("temperature must be positive");
  if (!(width > 0.0)) throw ConfigError("width must be positive");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (augment.cutout && augment.cutout_size < 1) throw ConfigError("cutout_size must be at least 1");
  if (augment.pad < 0) throw ConfigError("crop padding must be >= 0");
  if (dataset.empty()) throw ConfigError("dataset must be a directory or 'synthetic'");
  if (dataset == "synthetic" && (synthetic_train < 1 || synthetic_test < 0 || synthetic_size < 8)) {
    throw ConfigError("synthetic dataset needs train samples and images of at least 8x8");
  }
}

Tensor he_init(const Shape& shape, int64_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, he_std(fan_in));
  Tensor t(shape);
  for (float& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

void initialize_weights(Model& model, std::mt19937_64& rng) {
  const ModelGraph& g = model.graph();
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    if (l.kind != LayerKind::kConv) continue;
    model.state(static_cast<int>(i)).weights = he_init(l.shape, l.shape.k * l.shape.h * l.shape.w, rng);
  }
}

Model make_model(const TrainConfig& cfg, const Dataset& train) {
  ArchitectureSpec spec;
  spec.family = cfg.family;
  spec.depth = cfg.depth;
  spec.width = cfg.width;
  spec.num_classes = train.num_classes;
  spec.quantized = cfg.quantized;
  Model model(build_model(spec, cfg.variant, cfg.resolved_temperature()));
  model.set_input_statistics(train.mean, train.stddev);
  std::mt19937_64 rng = make_rng(cfg.seed, RngStream::kInit);
  initialize_weights(model, rng);
  return model;
}

void finalize_bn_statistics(Model& model, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw ShapeError("cannot finalize statistics over an empty dataset");
  if (batch_size < 1) throw ShapeError("batch_size must be at least 1");
  if (!model.has_batch_statistics()) throw StateError("model has no batch-normalization layers");
  const detail::FlushDenormals ftz;
  const ModelGraph& g = model.graph();
  const size_t n = g.layers.size();
  std::vector<std::vector<double>> mean(n), var(n);
  int64_t batches = 0;
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < data.size(); start += batch_size) {
    const int64_t end = std::min<int64_t>(data.size(), start + batch_size);
    idx.resize(static_cast<size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    const ForwardPass fp = forward(model, to_tensor(data, idx), NormMode::kTrain);
    for (size_t i = 0; i < n; ++i) {
      if (!fp.batch_stats[i]) continue;
      const BatchStats& st = *fp.batch_stats[i];
      if (mean[i].empty()) {
        mean[i].assign(st.mean.size(), 0.0);
        var[i].assign(st.var.size(), 0.0);
      }
      for (size_t c = 0; c < st.mean.size(); ++c) {
        mean[i][c] += st.mean[c];
        var[i][c] += st.var[c];
      }
    }
    ++batches;
  }
  for (size_t i = 0; i < n; ++i) {
    const LayerKind k = g.layers[i].kind;
    if (k != LayerKind::kBatchNorm && k != LayerKind::kMeanOnlyBN) continue;
    BNParams& bn = model.state(static_cast<int>(i)).bn;
    for (size_t c = 0; c < mean[i].size(); ++c) {
      bn.mean[c] = static_cast<float>(mean[i][c] / static_cast<double>(batches));
      bn.var[c] = static_cast<float>(var[i][c] / static_cast<double>(batches));
    }
    bn.finalized = true;
  }
}

double EvalResult::top1_error() const {
  return samples == 0 ? 0.0 : 100.0 * static_cast<double>(top1_errors) / static_cast<double>(samples);
}

double EvalResult::top5_error() const {
  return samples == 0 ? 0.0 : 100.0 * static_cast<double>(top5_errors) / static_cast<double>(samples);
}

std::vector<int> predictions(const Tensor& logits) {
  const Shape s = logits.shape();
  std::vector<int> out(static_cast<size_t>(s.k));
  for (int64_t k = 0; k < s.k; ++k) {
    const float* row = logits.ptr() + k * s.c;
    out[static_cast<size_t>(k)] = static_cast<int>(std::max_element(row, row + s.c) - row);
  }
  return out;
}

EvalResult evaluate(const Model& model, const Dataset& data, int batch_size, int threads) {
  if (data.num_classes != model.num_classes()) {
    throw ShapeError("dataset has " + std::to_string(data.num_classes) + " classes but the model predicts " +
                     std::to_string(model.num_classes()));
  }
  if (batch_size < 1 || threads < 1) throw ShapeError("batch_size and threads must be at least 1");
  data.validate();
  const PackedInference exec(model);
  const bool top5 = model.num_classes() >= 1000;
  const int64_t batches = (data.size() + batch_size - 1) / batch_size;

  auto run = [&](int shard, EvalResult& r) {
    const detail::FlushDenormals ftz;
    std::vector<int64_t> idx;
    for (int64_t b = shard; b < batches; b += threads) {
      const int64_t start = b * batch_size;
      const int64_t end = std::min<int64_t>(data.size(), start + batch_size);
      idx.resize(static_cast<size_t>(end - start));
      std::iota(idx.begin(), idx.end(), start);
      const Tensor logits = exec.logits(to_tensor(data, idx));
      const int64_t c = logits.shape().c;
      for (size_t k = 0; k < idx.size(); ++k) {
        const float* row = logits.ptr() + static_cast<int64_t>(k) * c;
        const int label = data.labels[static_cast<size_t>(idx[k])];
        const int64_t pred = std::max_element(row, row + c) - row;
        if (pred != label) ++r.top1_errors;
        if (top5) {
          // Rank of the true label: classes strictly ahead of it, ties broken by index.
          int64_t ahead = 0;
          for (int64_t j = 0; j < c; ++j) {
            if (row[j] > row[label] || (row[j] == row[label] && j < label)) ++ahead;
          }
          if (ahead >= 5) ++r.top5_errors;
        }
        ++r.samples;
      }
    }
  };

  std::vector<EvalResult> parts(static_cast<size_t>(threads));
  if (threads == 1) {
    run(0, parts[0]);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(run, t, std::ref(parts[static_cast<size_t>(t)]));
    for (std::thread& th : pool) th.join();
  }
  EvalResult total;
  total.has_top5 = top5;
  for (const EvalResult& p : parts) {
    total.samples += p.samples;
    total.top1_errors += p.top1_errors;
    total.top5_errors += p.top5_errors;
  }
  return total;
}

std::string EpochMetrics::to_line() const {
  char buf[256];
  if (test_err) {
    std::snprintf(buf, sizeof buf, "epoch=%d lr=%.9g train_loss=%.6f train_err=%.4f test_err=%.4f", epoch, lr,
                  train_loss, train_err, *test_err);
  } else {
    std::snprintf(buf, sizeof buf, "epoch=%d lr=%.9g train_loss=%.6f train_err=%.4f test_err=na", epoch, lr,
                  train_loss, train_err);
  }
  return buf;
}

double epoch_lr(const TrainConfig& cfg, int epoch_index) {
  if (cfg.epochs == 1) return cfg.lr_start;
  return cosine_lr(epoch_index, cfg.epochs - 1, cfg.lr_start, cfg.lr_end);
}

TrainResult train(Model model, const TrainConfig& cfg, const DatasetSplits& data, const EpochCallback& on_epoch) {
  cfg.validate();
  const detail::FlushDenormals ftz;
  const Dataset& train_set = data.train;
  train_set.validate();
  if (train_set.size() == 0) throw ShapeError("training set is empty");
  if (train_set.num_classes != model.num_classes()) throw ShapeError("dataset and model class counts differ");
  if (cfg.augment.cutout && cutout_covers_image(cfg.augment.cutout_size, train_set.height) &&
      cutout_covers_image(cfg.augment.cutout_size, train_set.width)) {
    throw ConfigError("cutout_size " + std::to_string(cfg.augment.cutout_size) + " blanks every " +
                      std::to_string(train_set.height) + "x" + std::to_string(train_set.width) + " image");
  }

  std::mt19937_64 shuffle_rng = make_rng(cfg.seed, RngStream::kShuffle);
  std::mt19937_64 augment_rng = make_rng(cfg.seed, RngStream::kAugment);
  const AugmentConfig* aug = augmentation_enabled(cfg.augment) ? &cfg.augment : nullptr;
  const SgdSettings sgd{cfg.momentum, cfg.weight_decay};

  TrainResult result{std::move(model), {}};
  Model& m = result.model;
  const std::vector<ParamRef> params = m.parameters();
  OptimizerState opt = OptimizerState::for_parameters(params);
  std::vector<int64_t> order(static_cast<size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), int64_t{0});

  for (int e = 0; e < cfg.epochs; ++e) {
    opt.epoch = e + 1;
    const double lr = epoch_lr(cfg, e);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int64_t errors = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const std::span<const int64_t> idx(order.data() + start, end - start);
      const std::vector<int> labels = gather_labels(train_set, idx);
      ForwardPass fp = forward(m, make_batch(train_set, idx, aug, &augment_rng), NormMode::kTrain);
      const XentResult<float> xent = softmax_xent(fp.tape, fp.logits, labels);
      const double loss = fp.tape.value(xent.loss)[0];
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(opt.epoch) + " step " +
                                  std::to_string(opt.step),
                              opt.epoch, opt.step);
      }
      loss_sum += loss * static_cast<double>(idx.size());
      const std::vector<int> pred = predictions(xent.probabilities);
      for (size_t k = 0; k < labels.size(); ++k) errors += pred[k] != labels[k] ? 1 : 0;

      fp.tape.backward(xent.loss);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (const ParamRef& p : params) grads.push_back(fp.gradient(p));
      sgd_step(params, grads, opt, lr, sgd);
    }

    EpochMetrics em;
    em.epoch = e + 1;
    em.lr = lr;
    em.train_loss = loss_sum / static_cast<double>(order.size());
    em.train_err = 100.0 * static_cast<double>(errors) / static_cast<double>(order.size());
    const bool last = e + 1 == cfg.epochs;
    if (last && m.has_batch_statistics()) finalize_bn_statistics(m, train_set, cfg.batch_size);
    if (data.test.size() > 0 && (last || cfg.eval_each_epoch)) {
      if (last || !m.has_batch_statistics()) {
        em.test_err = evaluate(m, data.test, cfg.batch_size, cfg.threads).top1_error();
      } else {
        Model snapshot = m;
        finalize_bn_statistics(snapshot, train_set, cfg.batch_size);
        em.test_err = evaluate(snapshot, data.test, cfg.batch_size, cfg.threads).top1_error();
      }
    }
    result.metrics.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, const DatasetSplits& data, const EpochCallback& on_epoch) {
  cfg.validate();
  return train(make_model(cfg, data.train), cfg, data, on_epoch);
}

DatasetSplits load_dataset(const TrainConfig& cfg) {
  if (cfg.dataset == "synthetic") {
    return make_synthetic_splits(cfg.synthetic_train, cfg.synthetic_test, cfg.synthetic_size, cfg.synthetic_seed);
  }
  return load_cifar_dir(cfg.dataset);
}

}  // namespace bnfree
