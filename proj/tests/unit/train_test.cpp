#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bnfree/error.hpp"
#include "bnfree/rng.hpp"
#include "bnfree/train.hpp"

namespace bnfree {
namespace {

TrainConfig micro(ModelVariant v, bool quantized, int epochs) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.quantized = quantized;
  cfg.depth = 8;
  cfg.width = 1;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.augment = AugmentConfig{false, 4, false, false, 18};
  cfg.synthetic_train = 48;
  cfg.synthetic_test = 16;
  cfg.synthetic_size = 8;
  return cfg;
}

Dataset balanced(int classes, int per_class, int64_t side) {
  Dataset d;
  d.height = side;
  d.width = side;
  d.num_classes = classes;
  std::mt19937_64 rng(1);
  for (int i = 0; i < classes * per_class; ++i) d.labels.push_back(i % classes);
  d.pixels.resize(static_cast<size_t>(d.size() * d.image_bytes()));
  for (auto& p : d.pixels) p = static_cast<uint8_t>(rng() & 0xFF);
  compute_channel_statistics(d);
  return d;
}

TEST(HeInit, SampleStd) {
  std::mt19937_64 rng(1);
  Tensor w = he_init(Shape{1, 1, 1, 100000}, 2, rng);
  double s = 0.0, ss = 0.0;
  for (float v : w.data()) {
    s += v;
    ss += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(w.size());
  const double sd = std::sqrt(ss / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, 1.0, 0.02);
}

TEST(Config, TemperatureDefaults) {
  TrainConfig cfg;
  cfg.variant = ModelVariant::kSReLUOnly;
  EXPECT_EQ(cfg.resolved_temperature(), 50.0);
  cfg.variant = ModelVariant::kBaseline1;
  EXPECT_EQ(cfg.resolved_temperature(), 1.0);
  cfg.variant = ModelVariant::kMeanOnlyFinal;
  cfg.temperature = 30.0;
  EXPECT_EQ(cfg.resolved_temperature(), 30.0);
}

TEST(Config, ValidateRejectsNonsense) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_end = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.temperature = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Evaluate, ConstantClassZeroPredictorOnBalancedTenClasses) {
  Dataset d = balanced(10, 5, 8);
  TrainConfig cfg = micro(ModelVariant::kSReLUOnly, false, 1);
  Model m = make_model(cfg, d);
  for (size_t i = 0; i < m.graph().layers.size(); ++i) {
    if (m.graph().layers[i].kind == LayerKind::kConv) m.state(static_cast<int>(i)).weights.fill(0.0f);
  }
  EvalResult r = evaluate(m, d, 7);
  EXPECT_EQ(r.samples, 50);
  EXPECT_DOUBLE_EQ(r.top1_error(), 90.0);
  EXPECT_FALSE(r.has_top5);
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
  DatasetSplits s = make_synthetic_splits(40, 24, 8, 2);
  Model m = make_model(micro(ModelVariant::kSReLUOnly, true, 1), s.train);
  EvalResult a = evaluate(m, s.test, 5, 1);
  EvalResult b = evaluate(m, s.test, 5, 3);
  EXPECT_EQ(a.top1_errors, b.top1_errors);
}

TEST(Evaluate, ClassCountMismatch) {
  Dataset d = balanced(10, 2, 8);
  Dataset two = make_synthetic_blobs(8, 8, 1, Split::kTrain);
  Model m = make_model(micro(ModelVariant::kSReLUOnly, false, 1), two);
  EXPECT_THROW(evaluate(m, d, 4), ShapeError);
}

TEST(Predictions, Argmax) {
  Tensor l(Shape{2, 1, 1, 3}, std::vector<float>{0.1f, 0.9f, 0.2f, 3.0f, -1.0f, 2.0f});
  EXPECT_EQ(predictions(l), (std::vector<int>{1, 0}));
}

TEST(Finalize, ConstantDatasetGivesZeroVarianceAtInput) {
  Dataset d = balanced(2, 4, 4);
  std::fill(d.pixels.begin(), d.pixels.end(), 51);
  Model m = make_model(micro(ModelVariant::kBaseline2, false, 1), d);
  finalize_bn_statistics(m, d, 3);
  const ModelGraph& g = m.graph();
  for (size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].kind != LayerKind::kBatchNorm) continue;
    const BNParams& bn = m.state(static_cast<int>(i)).bn;
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(bn.mean[c], 0.2, 1e-6);
      EXPECT_NEAR(bn.var[c], 0.0, 1e-12);
    }
    break;
  }
}

TEST(Finalize, NoBatchNormLayers) {
  Dataset d = balanced(2, 4, 4);
  Model m = make_model(micro(ModelVariant::kSReLUOnly, false, 1), d);
  EXPECT_THROW(finalize_bn_statistics(m, d, 4), StateError);
  Dataset empty = d;
  empty.labels.clear();
  empty.pixels.clear();
  Model b = make_model(micro(ModelVariant::kBaseline1, false, 1), d);
  EXPECT_THROW(finalize_bn_statistics(b, empty, 4), ShapeError);
}

TEST(Schedule, EpochMapping) {
  TrainConfig cfg = micro(ModelVariant::kBaseline1, false, 30);
  EXPECT_EQ(epoch_lr(cfg, 0), 0.1);
  EXPECT_EQ(epoch_lr(cfg, 29), 1e-5);
  cfg.epochs = 1;
  EXPECT_EQ(epoch_lr(cfg, 0), 0.1);
}

TEST(Train, DeterministicTrace) {
  TrainConfig cfg = micro(ModelVariant::kBaseline1, true, 2);
  cfg.augment = AugmentConfig{};
  cfg.augment.cutout_size = 4;
  DatasetSplits s = load_dataset(cfg);
  auto a = train(cfg, s);
  auto b = train(cfg, s);
  ASSERT_EQ(a.metrics.size(), 2u);
  for (size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(a.metrics[i].to_line(), b.metrics[i].to_line());
  EXPECT_TRUE(a.model == b.model);
  EXPECT_FALSE(a.metrics[0].test_err.has_value());
  EXPECT_TRUE(a.metrics[1].test_err.has_value());
  EXPECT_TRUE(a.model.statistics_finalized());
}

TEST(Train, EvalEachEpochDoesNotPerturbTraining) {
  TrainConfig cfg = micro(ModelVariant::kBaseline2, false, 2);
  DatasetSplits s = load_dataset(cfg);
  auto a = train(cfg, s);
  cfg.eval_each_epoch = true;
  auto b = train(cfg, s);
  EXPECT_TRUE(b.metrics[0].test_err.has_value());
  EXPECT_EQ(a.metrics[1].to_line(), b.metrics[1].to_line());
}

TEST(Train, DivergenceIsReported) {
  TrainConfig cfg = micro(ModelVariant::kSReLUOnly, false, 3);
  cfg.lr_start = 1e6;
  cfg.lr_end = 1e5;
  cfg.temperature = 1.0;
  DatasetSplits s = load_dataset(cfg);
  EXPECT_THROW(train(cfg, s), DivergenceError);
}

TEST(Train, CutoutCoveringWholeImageRejected) {
  TrainConfig cfg = micro(ModelVariant::kBaseline1, false, 1);
  cfg.augment.cutout = true;
  cfg.augment.cutout_size = 18;
  DatasetSplits s = load_dataset(cfg);
  EXPECT_THROW(train(cfg, s), ConfigError);
  cfg.augment.cutout_size = 14;
  EXPECT_NO_THROW(train(cfg, s));
}

TEST(Train, LossDecreasesOnMicroTask) {
  TrainConfig cfg = micro(ModelVariant::kBaseline2, false, 6);
  DatasetSplits s = load_dataset(cfg);
  auto r = train(cfg, s);
  EXPECT_LT(r.metrics.back().train_loss, r.metrics.front().train_loss);
}

TEST(MetricLine, Format) {
  EpochMetrics m;
  m.epoch = 3;
  m.lr = 0.05;
  m.train_loss = 0.25;
  m.train_err = 12.5;
  EXPECT_EQ(m.to_line(), "epoch=3 lr=0.05 train_loss=0.250000 train_err=12.5000 test_err=na");
  m.test_err = 7.0;
  EXPECT_EQ(m.to_line(), "epoch=3 lr=0.05 train_loss=0.250000 train_err=12.5000 test_err=7.0000");
}

TEST(Rng, StreamsAreIndependentAndSeeded) {
  auto a = make_rng(5, RngStream::kInit);
  auto b = make_rng(5, RngStream::kShuffle);
  auto c = make_rng(5, RngStream::kInit);
  const auto va = a();
  EXPECT_NE(va, b());
  EXPECT_EQ(va, c());
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
}

}  // namespace
}  // namespace bnfree
