#include "bnfree/network.hpp"

#include <string>

#include "bnfree/activation.hpp"
#include "bnfree/error.hpp"
#include "bnfree/ops.hpp"

namespace bnfree {

Model::Model(ModelGraph graph) : graph_(std::move(graph)) {
  states_.resize(graph_.layers.size());
  for (size_t i = 0; i < graph_.layers.size(); ++i) {
    const Layer& l = graph_.layers[i];
    LayerState& s = states_[i];
    switch (l.kind) {
      case LayerKind::kConv:
        s.weights = Tensor(l.shape);
        s.sigma0 = he_std(l.shape.k * l.shape.h * l.shape.w);
        break;
      case LayerKind::kBatchNorm:
        s.bn = BNParams::make(l.channels(), l.affine);
        break;
      case LayerKind::kMeanOnlyBN:
        s.bn = BNParams::make(l.channels(), false, true);
        break;
      case LayerKind::kStandardize:
        s.mean.assign(static_cast<size_t>(l.channels()), 0.0f);
        s.stddev.assign(static_cast<size_t>(l.channels()), 1.0f);
        break;
      default:
        break;
    }
  }
}

void Model::set_input_statistics(std::span<const double> mean, std::span<const double> stddev) {
  for (size_t i = 0; i < graph_.layers.size(); ++i) {
    if (graph_.layers[i].kind != LayerKind::kStandardize) continue;
    LayerState& s = states_[i];
    if (mean.size() != s.mean.size() || stddev.size() != s.stddev.size()) {
      throw ShapeError("input statistics have the wrong channel count");
    }
    for (size_t c = 0; c < mean.size(); ++c) {
      if (!(stddev[c] > 0.0)) throw ShapeError("input standard deviation must be positive");
      s.mean[c] = static_cast<float>(mean[c]);
      s.stddev[c] = static_cast<float>(stddev[c]);
    }
  }
}

bool Model::has_batch_statistics() const {
  return graph_.count(LayerKind::kBatchNorm) + graph_.count(LayerKind::kMeanOnlyBN) > 0;
}

bool Model::statistics_finalized() const {
  for (size_t i = 0; i < graph_.layers.size(); ++i) {
    const LayerKind k = graph_.layers[i].kind;
    if ((k == LayerKind::kBatchNorm || k == LayerKind::kMeanOnlyBN) && !states_[i].bn.finalized) return false;
  }
  return true;
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < graph_.layers.size(); ++i) {
    const Layer& l = graph_.layers[i];
    LayerState& s = states_[i];
    const int idx = static_cast<int>(i);
    if (l.kind == LayerKind::kConv) {
      out.push_back({idx, ParamRole::kWeights, s.weights.data(), true});
    } else if (l.kind == LayerKind::kBatchNorm && l.affine) {
      out.push_back({idx, ParamRole::kGain, std::span<float>(s.bn.gain), false});
      out.push_back({idx, ParamRole::kShift, std::span<float>(s.bn.shift), false});
    }
  }
  return out;
}

bool operator==(const Model& a, const Model& b) {
  if (a.graph_.to_text() != b.graph_.to_text()) return false;
  for (size_t i = 0; i < a.states_.size(); ++i) {
    const LayerState& x = a.states_[i];
    const LayerState& y = b.states_[i];
    if (!(x.weights == y.weights) || x.sigma0 != y.sigma0 || x.mean != y.mean || x.stddev != y.stddev) return false;
    if (x.bn.gain != y.bn.gain || x.bn.shift != y.bn.shift || x.bn.mean != y.bn.mean || x.bn.var != y.bn.var ||
        x.bn.epsilon != y.bn.epsilon || x.bn.finalized != y.bn.finalized) {
      return false;
    }
  }
  return true;
}

Tensor ForwardPass::gradient(const ParamRef& p) const {
  const std::vector<NodeId>& nodes =
      p.role == ParamRole::kWeights ? weight_nodes : (p.role == ParamRole::kGain ? gain_nodes : shift_nodes);
  const NodeId id = nodes.at(static_cast<size_t>(p.layer));
  const Shape s = id == kNoNode ? Shape{1, 1, 1, static_cast<int64_t>(p.value.size())} : tape.value(id).shape();
  if (id == kNoNode) return Tensor(s);
  const Tensor* g = tape.grad(id);
  return g ? *g : Tensor(s);
}

namespace {

Tensor channel_vector(const std::vector<float>& v) {
  return Tensor(Shape{1, 1, 1, static_cast<int64_t>(v.size())}, v);
}

// Shared layer dispatch. With `packed` set, quantized convs run the
// multiplier-free kernel and are recorded as constants.
void run(const Model& model, const Tensor& input, NormMode mode,
         const std::vector<std::optional<PackedConvWeights>>* packed, ForwardPass& fp) {
  const ModelGraph& g = model.graph();
  const size_t n = g.layers.size();
  fp.weight_nodes.assign(n, kNoNode);
  fp.gain_nodes.assign(n, kNoNode);
  fp.shift_nodes.assign(n, kNoNode);
  fp.batch_stats.assign(n, std::nullopt);
  std::vector<NodeId> out(n, kNoNode);
  const NodeId in_node = fp.tape.leaf(input, false);
  auto src = [&](int idx) { return idx == kNetworkInput ? in_node : out[static_cast<size_t>(idx)]; };

  for (size_t i = 0; i < n; ++i) {
    const Layer& l = g.layers[i];
    const LayerState& s = model.state(static_cast<int>(i));
    Tape<float>& t = fp.tape;
    const NodeId x = src(l.inputs.front());
    NodeId y = kNoNode;
    switch (l.kind) {
      case LayerKind::kConv: {
        if (packed && (*packed)[i]) {
          y = t.leaf(packed_conv2d(t.value(x), *(*packed)[i], l.stride, l.pad), false);
          break;
        }
        const NodeId w = t.leaf(s.weights, mode == NormMode::kTrain);
        fp.weight_nodes[i] = w;
        const NodeId used = l.quantized ? binarize(t, w, s.sigma0) : w;
        y = conv2d(t, x, used, l.stride, l.pad);
        break;
      }
      case LayerKind::kBatchNorm: {
        const bool learn = l.affine && mode == NormMode::kTrain;
        const NodeId gain = t.leaf(channel_vector(s.bn.gain), learn);
        const NodeId shift = t.leaf(channel_vector(s.bn.shift), learn);
        fp.gain_nodes[i] = gain;
        fp.shift_nodes[i] = shift;
        if (mode == NormMode::kTrain) {
          BatchStats st;
          y = batch_norm_train(t, x, gain, shift, s.bn.epsilon, &st);
          fp.batch_stats[i] = std::move(st);
        } else {
          y = batch_norm_infer(t, x, gain, shift, s.bn);
        }
        break;
      }
      case LayerKind::kMeanOnlyBN: {
        BatchStats st;
        y = mean_only_bn(t, x, s.bn, mode, &st);
        if (mode == NormMode::kTrain) fp.batch_stats[i] = std::move(st);
        break;
      }
      case LayerKind::kStandardize:
        y = standardize(t, x, s.mean, s.stddev);
        break;
      case LayerKind::kReLU:
        y = relu(t, x);
        break;
      case LayerKind::kSReLU:
        y = srelu(t, x);
        break;
      case LayerKind::kELU:
        y = elu(t, x);
        break;
      case LayerKind::kScale:
        y = scale_layer(t, x, l.temperature);
        break;
      case LayerKind::kAdd:
        y = add(t, x, src(l.inputs[1]));
        break;
      case LayerKind::kShortcut:
        y = shortcut_downsample(t, x, l.stride, l.shape.c);
        break;
      case LayerKind::kMaxPool:
        y = max_pool(t, x, static_cast<int>(l.shape.k), l.stride, l.pad);
        break;
      case LayerKind::kGlobalAvgPool:
        y = global_average_pool(t, x);
        break;
      case LayerKind::kSoftmax:
        // The loss applies the softmax; the graph output is the logit node.
        y = x;
        break;
    }
    out[i] = y;
  }
  fp.logits = out.at(static_cast<size_t>(g.logits));
}

}  // namespace

ForwardPass forward(const Model& model, const Tensor& input, NormMode mode) {
  ForwardPass fp;
  run(model, input, mode, nullptr, fp);
  return fp;
}

PackedInference::PackedInference(const Model& model) : model_(&model) {
  if (!model.statistics_finalized()) throw StateError("inference needs finalized BN statistics");
  const ModelGraph& g = model.graph();
  packed_.resize(g.layers.size());
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    if (l.kind == LayerKind::kConv && l.quantized) {
      const LayerState& s = model.state(static_cast<int>(i));
      packed_[i] = pack_weights(s.weights, s.sigma0);
    }
  }
}

Tensor PackedInference::logits(const Tensor& input) const {
  ForwardPass fp;
  run(*model_, input, NormMode::kInfer, &packed_, fp);
  return fp.tape.value(fp.logits);
}

}  // namespace bnfree
