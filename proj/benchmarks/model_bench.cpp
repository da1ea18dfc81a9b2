#include <benchmark/benchmark.h>

#include <numeric>

#include "bnfree/dataset.hpp"
#include "bnfree/softmax.hpp"
#include "bnfree/train.hpp"

namespace {

using namespace bnfree;

TrainConfig micro(ModelVariant v, bool quantized) {
  TrainConfig c;
  c.variant = v;
  c.quantized = quantized;
  c.depth = 8;
  c.width = 1.0;
  c.synthetic_size = 16;
  return c;
}

// One SGD step (forward, loss, backward) on a batch of 125.
void BM_TrainStep(benchmark::State& state) {
  const TrainConfig cfg = micro(static_cast<ModelVariant>(state.range(0)), state.range(1) != 0);
  const Dataset data = make_synthetic_blobs(125, cfg.synthetic_size, 7, Split::kTrain);
  const Model model = make_model(cfg, data);
  std::vector<int64_t> idx(125);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x = to_tensor(data, idx);
  for (auto _ : state) {
    ForwardPass fp = forward(model, x, NormMode::kTrain);
    const XentResult<float> xent = softmax_xent(fp.tape, fp.logits, data.labels);
    fp.tape.backward(xent.loss);
    benchmark::DoNotOptimize(fp.tape.grad(fp.logits));
  }
}

void BM_PackedInference(benchmark::State& state) {
  TrainConfig cfg = micro(ModelVariant::kSReLUOnly, true);
  const Dataset data = make_synthetic_blobs(125, cfg.synthetic_size, 7, Split::kTrain);
  const Model model = make_model(cfg, data);
  const PackedInference exec(model);
  std::vector<int64_t> idx(125);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x = to_tensor(data, idx);
  for (auto _ : state) benchmark::DoNotOptimize(exec.logits(x));
  state.SetItemsProcessed(state.iterations() * 125);
}

}  // namespace

BENCHMARK(BM_TrainStep)->Args({2, 0})->Args({2, 1})->Args({4, 0})->Args({4, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PackedInference)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
