#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnfree/ops.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

/// The six network variants under comparison.
enum class ModelVariant : uint32_t {
  kBaseline1 = 1,      // BN everywhere, learned gain and shift
  kBaseline2 = 2,      // BN everywhere, gain 1 and shift 0 fixed
  kFinalBNOnly = 3,    // one non-affine BN before GAP, sReLU elsewhere
  kSReLUOnly = 4,      // no BN, 1/T scale before GAP
  kELUOnly = 5,        // as kSReLUOnly with ELU
  kMeanOnlyFinal = 6,  // as kSReLUOnly plus mean-only BN before the scale
};

inline constexpr ModelVariant kAllVariants[] = {
    ModelVariant::kBaseline1, ModelVariant::kBaseline2, ModelVariant::kFinalBNOnly,
    ModelVariant::kSReLUOnly, ModelVariant::kELUOnly,   ModelVariant::kMeanOnlyFinal};

inline constexpr double kDefaultTemperature = 50.0;

std::string_view variant_name(ModelVariant v);
/// Accepts the names produced by variant_name(); nullopt otherwise.
std::optional<ModelVariant> parse_variant(std::string_view name);
/// "baseline1, baseline2, ..." for usage messages.
std::string variant_list();
/// Variants whose head carries the constant 1/T scale layer.
bool uses_temperature(ModelVariant v);

enum class Family : uint32_t { kCifar = 1, kImageNet = 2 };

struct ArchitectureSpec {
  Family family = Family::kCifar;
  int depth = 20;
  double width = 4.0;
  int num_classes = 10;
  bool quantized = false;
};

enum class LayerKind : uint32_t {
  kConv = 1,
  kBatchNorm = 2,
  kMeanOnlyBN = 3,
  kStandardize = 4,
  kReLU = 5,
  kSReLU = 6,
  kELU = 7,
  kScale = 8,
  kAdd = 9,
  kShortcut = 10,
  kMaxPool = 11,
  kGlobalAvgPool = 12,
  kSoftmax = 13,
};

std::string_view kind_name(LayerKind k);

inline constexpr int kNetworkInput = -1;

/// One node of the layer graph. `shape` is (R, S, Cin, Cout) for
/// convolutions, (1, 1, Cin, Cout) for shortcuts, (window, window, C, C) for
/// max pooling and (1, 1, 1, C) for per-channel layers.
struct Layer {
  LayerKind kind = LayerKind::kConv;
  std::string name;
  std::vector<int> inputs;
  Shape shape;
  int stride = 1;
  Padding pad = Padding::same();
  bool affine = false;     // BN gain/shift are learned
  bool quantized = false;  // 1-bit conv weights
  double temperature = 1.0;
  int param_slot = -1;     // unique among layers that own state

  int64_t channels() const { return shape.c; }
};

/// Immutable layer graph of one network; layers are topologically ordered.
struct ModelGraph {
  ArchitectureSpec spec;
  ModelVariant variant = ModelVariant::kBaseline1;
  double temperature = 1.0;
  std::vector<Layer> layers;
  int logits = -1;  // layer whose output feeds the softmax

  int count(LayerKind kind) const;
  /// One layer per line: index, kind, name, shape, inputs, attributes.
  std::string to_text() const;
};

/// Post-activation wide ResNet for 32x32 inputs. depth = 6n + 2 (20 for the
/// reference nets, 8 for desk-scale runs); stage widths 16k, 32k, 64k.
ModelGraph build_cifar(const ArchitectureSpec& spec, ModelVariant variant, double temperature);

/// 18-layer ResNet for 224x224 inputs: 7x7/2 stem, 3x3/2 max pool, stage
/// widths 64w, 128w, 256w, 512w, final 1x1 conv to num_classes.
ModelGraph build_imagenet(const ArchitectureSpec& spec, ModelVariant variant, double temperature);

/// Dispatches on spec.family.
ModelGraph build_model(const ArchitectureSpec& spec, ModelVariant variant, double temperature);

struct LayerParameterCount {
  int layer = 0;
  std::string name;
  int64_t count = 0;
};

/// Learned parameters only: conv weights plus BN gain/shift where learned.
/// Finalized BN statistics and fixed input standardisation are excluded.
struct ParameterCount {
  std::vector<LayerParameterCount> per_layer;
  int64_t total = 0;
};

ParameterCount count_parameters(const ModelGraph& graph);

/// Output shape of every layer for an input of `input` shape.
std::vector<Shape> infer_shapes(const ModelGraph& graph, Shape input);

}  // namespace bnfree
