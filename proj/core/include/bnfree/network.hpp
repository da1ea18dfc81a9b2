#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bnfree/binary.hpp"
#include "bnfree/model.hpp"
#include "bnfree/norm.hpp"
#include "bnfree/tape.hpp"

namespace bnfree {

/// Mutable state owned by one graph layer. Only the fields relevant to the
/// layer kind are populated.
struct LayerState {
  Tensor weights;                   // conv: full-precision (shadow) weights
  double sigma0 = 0.0;              // conv: 1-bit scale, frozen at init
  BNParams bn;                      // batchnorm / mean-only BN
  std::vector<float> mean, stddev;  // standardize
};

enum class ParamRole { kWeights, kGain, kShift };

/// A learned parameter exposed to the optimizer.
struct ParamRef {
  int layer = 0;
  ParamRole role = ParamRole::kWeights;
  std::span<float> value;
  bool weight_decay = false;  // conv weights only
};

/// A layer graph plus its parameters and statistics.
class Model {
 public:
  explicit Model(ModelGraph graph);

  const ModelGraph& graph() const { return graph_; }
  int num_classes() const { return graph_.spec.num_classes; }

  LayerState& state(int layer) { return states_.at(static_cast<size_t>(layer)); }
  const LayerState& state(int layer) const { return states_.at(static_cast<size_t>(layer)); }

  /// Sets the fixed per-channel input standardisation (BN-free variants).
  void set_input_statistics(std::span<const double> mean, std::span<const double> stddev);

  /// True when the graph holds BN or mean-only BN layers.
  bool has_batch_statistics() const;
  bool statistics_finalized() const;

  /// Learned parameters in graph order: conv weights, then BN gain and
  /// shift for affine BN layers.
  std::vector<ParamRef> parameters();

  friend bool operator==(const Model& a, const Model& b);

 private:
  ModelGraph graph_;
  std::vector<LayerState> states_;
};

inline constexpr NodeId kNoNode{-1};

/// One forward pass recorded on a tape.
struct ForwardPass {
  Tape<float> tape;
  NodeId logits = kNoNode;
  std::vector<NodeId> weight_nodes;  // per layer; shadow-weight leaf of convs
  std::vector<NodeId> gain_nodes;    // per layer; BN gain leaf
  std::vector<NodeId> shift_nodes;
  std::vector<std::optional<BatchStats>> batch_stats;  // per layer, train mode

  /// Gradient for `p` after tape.backward(); zeros if none reached it.
  Tensor gradient(const ParamRef& p) const;
};

/// Forward over the graph. Train mode normalises with batch statistics and
/// records them; infer mode uses finalized statistics (StateError if absent).
/// Quantized convs use sigma0 * sign(shadow) with a straight-through
/// gradient.
ForwardPass forward(const Model& model, const Tensor& input, NormMode mode);

/// Inference-only executor: quantized convs run through packed_conv2d on
/// weights packed once at construction. The model must outlive it.
class PackedInference {
 public:
  explicit PackedInference(const Model& model);
  Tensor logits(const Tensor& input) const;

 private:
  const Model* model_;
  std::vector<std::optional<PackedConvWeights>> packed_;
};

}  // namespace bnfree
