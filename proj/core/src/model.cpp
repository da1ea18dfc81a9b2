#include "bnfree/model.hpp"

#include <cmath>
#include <sstream>

#include "bnfree/error.hpp"

namespace bnfree {

std::string_view variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kBaseline1: return "baseline1";
    case ModelVariant::kBaseline2: return "baseline2";
    case ModelVariant::kFinalBNOnly: return "finalbnonly";
    case ModelVariant::kSReLUOnly: return "sreluonly";
    case ModelVariant::kELUOnly: return "eluonly";
    case ModelVariant::kMeanOnlyFinal: return "meanonlyfinal";
  }
  return "unknown";
}

std::optional<ModelVariant> parse_variant(std::string_view name) {
  for (ModelVariant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

std::string variant_list() {
  std::string out;
  for (ModelVariant v : kAllVariants) {
    if (!out.empty()) out += ", ";
    out += variant_name(v);
  }
  return out;
}

bool uses_temperature(ModelVariant v) {
  return v == ModelVariant::kSReLUOnly || v == ModelVariant::kELUOnly || v == ModelVariant::kMeanOnlyFinal;
}

std::string_view kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kMeanOnlyBN: return "meanonlybn";
    case LayerKind::kStandardize: return "standardize";
    case LayerKind::kReLU: return "relu";
    case LayerKind::kSReLU: return "srelu";
    case LayerKind::kELU: return "elu";
    case LayerKind::kScale: return "scale";
    case LayerKind::kAdd: return "add";
    case LayerKind::kShortcut: return "shortcut";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kGlobalAvgPool: return "gap";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "unknown";
}

int ModelGraph::count(LayerKind kind) const {
  int n = 0;
  for (const Layer& l : layers) n += (l.kind == kind);
  return n;
}

std::string ModelGraph::to_text() const {
  std::ostringstream os;
  os << "# variant=" << variant_name(variant) << " family=" << (spec.family == Family::kCifar ? "cifar" : "imagenet")
     << " depth=" << spec.depth << " width=" << spec.width << " classes=" << spec.num_classes
     << " quantized=" << (spec.quantized ? 1 : 0) << " temperature=" << temperature << "\n";
  for (size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    os << i << " " << kind_name(l.kind) << " " << l.name << " shape=" << l.shape.str() << " in=";
    for (size_t j = 0; j < l.inputs.size(); ++j) os << (j ? "," : "") << l.inputs[j];
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kMaxPool || l.kind == LayerKind::kShortcut) {
      os << " stride=" << l.stride;
    }
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kMaxPool) {
      os << " pad=" << (l.pad.mode == Padding::Mode::kSame ? std::string("same") : std::to_string(l.pad.amount));
    }
    if (l.kind == LayerKind::kConv) os << " bits=" << (l.quantized ? 1 : 32);
    if (l.kind == LayerKind::kBatchNorm) os << " affine=" << (l.affine ? 1 : 0);
    if (l.kind == LayerKind::kScale) os << " T=" << l.temperature;
    if (l.param_slot >= 0) os << " slot=" << l.param_slot;
    os << "\n";
  }
  return os.str();
}

namespace {

class GraphBuilder {
 public:
  GraphBuilder(const ArchitectureSpec& spec, ModelVariant variant, double temperature) {
    graph_.spec = spec;
    graph_.variant = variant;
    graph_.temperature = temperature;
  }

  int push(Layer l) {
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kBatchNorm || l.kind == LayerKind::kMeanOnlyBN ||
        l.kind == LayerKind::kStandardize) {
      l.param_slot = next_slot_++;
    }
    graph_.layers.push_back(std::move(l));
    return static_cast<int>(graph_.layers.size()) - 1;
  }

  int conv(int in, int64_t r, int64_t cin, int64_t cout, int stride, Padding pad, const std::string& name) {
    Layer l;
    l.kind = LayerKind::kConv;
    l.name = name;
    l.inputs = {in};
    l.shape = Shape{r, r, cin, cout};
    l.stride = stride;
    l.pad = pad;
    l.quantized = graph_.spec.quantized;
    return push(std::move(l));
  }

  int per_channel(LayerKind kind, int in, int64_t c, const std::string& name, bool affine = false) {
    Layer l;
    l.kind = kind;
    l.name = name;
    l.inputs = {in};
    l.shape = Shape{1, 1, 1, c};
    l.affine = affine;
    if (kind == LayerKind::kScale) l.temperature = graph_.temperature;
    return push(std::move(l));
  }

  bool baseline() const {
    return graph_.variant == ModelVariant::kBaseline1 || graph_.variant == ModelVariant::kBaseline2;
  }
  bool learned_affine() const { return graph_.variant == ModelVariant::kBaseline1; }
  LayerKind activation() const {
    if (baseline()) return LayerKind::kReLU;
    return graph_.variant == ModelVariant::kELUOnly ? LayerKind::kELU : LayerKind::kSReLU;
  }

  int input_norm(int64_t channels) {
    if (baseline()) return per_channel(LayerKind::kBatchNorm, kNetworkInput, channels, "input_bn", false);
    return per_channel(LayerKind::kStandardize, kNetworkInput, channels, "input_std");
  }

  // Norm (baselines only) then activation.
  int norm_act(int in, int64_t c, const std::string& name) {
    int x = norm(in, c, name);
    return per_channel(activation(), x, c, name + "_act");
  }

  int norm(int in, int64_t c, const std::string& name) {
    if (!baseline()) return in;
    return per_channel(LayerKind::kBatchNorm, in, c, name + "_bn", learned_affine());
  }

  int block(int in, int64_t cin, int64_t cout, int stride, const std::string& name) {
    int x = conv(in, 3, cin, cout, stride, Padding::same(), name + "_conv1");
    x = norm_act(x, cout, name + "_1");
    x = conv(x, 3, cout, cout, 1, Padding::same(), name + "_conv2");
    x = norm(x, cout, name + "_2");
    int shortcut = in;
    if (stride != 1 || cin != cout) {
      Layer l;
      l.kind = LayerKind::kShortcut;
      l.name = name + "_shortcut";
      l.inputs = {in};
      l.shape = Shape{1, 1, cin, cout};
      l.stride = stride;
      shortcut = push(std::move(l));
    }
    Layer sum;
    sum.kind = LayerKind::kAdd;
    sum.name = name + "_add";
    sum.inputs = {x, shortcut};
    sum.shape = Shape{1, 1, 1, cout};
    const int joined = push(std::move(sum));
    return per_channel(activation(), joined, cout, name + "_out");
  }

  void head(int in, int64_t cin) {
    const int64_t classes = graph_.spec.num_classes;
    int x = conv(in, 1, cin, classes, 1, Padding::same(), "final_conv");
    switch (graph_.variant) {
      case ModelVariant::kBaseline1:
      case ModelVariant::kBaseline2:
        x = per_channel(LayerKind::kBatchNorm, x, classes, "final_bn", learned_affine());
        break;
      case ModelVariant::kFinalBNOnly:
        x = per_channel(LayerKind::kBatchNorm, x, classes, "final_bn", false);
        break;
      case ModelVariant::kSReLUOnly:
      case ModelVariant::kELUOnly:
        x = per_channel(LayerKind::kScale, x, classes, "final_scale");
        break;
      case ModelVariant::kMeanOnlyFinal:
        x = per_channel(LayerKind::kMeanOnlyBN, x, classes, "final_meanbn");
        x = per_channel(LayerKind::kScale, x, classes, "final_scale");
        break;
    }
    Layer gap;
    gap.kind = LayerKind::kGlobalAvgPool;
    gap.name = "gap";
    gap.inputs = {x};
    gap.shape = Shape{1, 1, 1, classes};
    graph_.logits = push(std::move(gap));
    Layer sm;
    sm.kind = LayerKind::kSoftmax;
    sm.name = "softmax";
    sm.inputs = {graph_.logits};
    sm.shape = Shape{1, 1, 1, classes};
    push(std::move(sm));
  }

  ModelGraph finish() { return std::move(graph_); }

 private:
  ModelGraph graph_;
  int next_slot_ = 0;
};

void validate_common(const ArchitectureSpec& spec, ModelVariant variant, double temperature) {
  if (!(spec.width > 0.0)) throw ShapeError("width must be positive");
  if (spec.num_classes < 2) throw ShapeError("need at least two classes");
  if (!parse_variant(variant_name(variant))) throw ShapeError("unknown variant");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ShapeError("temperature must be positive");
}

int64_t scaled_channels(double base, double width) {
  const auto c = static_cast<int64_t>(std::llround(base * width));
  if (c < 1) throw ShapeError("width yields zero channels");
  return c;
}

}  // namespace

ModelGraph build_cifar(const ArchitectureSpec& spec, ModelVariant variant, double temperature) {
  validate_common(spec, variant, temperature);
  if (spec.family != Family::kCifar) throw ShapeError("build_cifar needs a CIFAR spec");
  if (spec.depth < 8 || (spec.depth - 2) % 6 != 0) {
    throw ShapeError("unsupported CIFAR depth " + std::to_string(spec.depth) + " (need 6n+2, n >= 1)");
  }
  const int blocks = (spec.depth - 2) / 6;
  GraphBuilder b(spec, variant, temperature);
  const int64_t widths[3] = {scaled_channels(16, spec.width), scaled_channels(32, spec.width),
                             scaled_channels(64, spec.width)};
  int x = b.input_norm(3);
  x = b.conv(x, 3, 3, widths[0], 1, Padding::same(), "stem_conv");
  x = b.norm_act(x, widths[0], "stem");
  int64_t cin = widths[0];
  for (int s = 0; s < 3; ++s) {
    for (int i = 0; i < blocks; ++i) {
      const int stride = (s > 0 && i == 0) ? 2 : 1;
      x = b.block(x, cin, widths[s], stride, "s" + std::to_string(s + 1) + "b" + std::to_string(i + 1));
      cin = widths[s];
    }
  }
  b.head(x, cin);
  return b.finish();
}

ModelGraph build_imagenet(const ArchitectureSpec& spec, ModelVariant variant, double temperature) {
  validate_common(spec, variant, temperature);
  if (spec.family != Family::kImageNet) throw ShapeError("build_imagenet needs an ImageNet spec");
  if (spec.depth != 18) throw ShapeError("unsupported ImageNet depth " + std::to_string(spec.depth));
  GraphBuilder b(spec, variant, temperature);
  const int64_t widths[4] = {scaled_channels(64, spec.width), scaled_channels(128, spec.width),
                             scaled_channels(256, spec.width), scaled_channels(512, spec.width)};
  int x = b.input_norm(3);
  x = b.conv(x, 7, 3, widths[0], 2, Padding::exact(3), "stem_conv");
  x = b.norm_act(x, widths[0], "stem");
  Layer pool;
  pool.kind = LayerKind::kMaxPool;
  pool.name = "stem_pool";
  pool.inputs = {x};
  pool.shape = Shape{3, 3, widths[0], widths[0]};
  pool.stride = 2;
  pool.pad = Padding::exact(1);
  x = b.push(std::move(pool));
  int64_t cin = widths[0];
  for (int s = 0; s < 4; ++s) {
    for (int i = 0; i < 2; ++i) {
      const int stride = (s > 0 && i == 0) ? 2 : 1;
      x = b.block(x, cin, widths[s], stride, "s" + std::to_string(s + 1) + "b" + std::to_string(i + 1));
      cin = widths[s];
    }
  }
  b.head(x, cin);
  return b.finish();
}

ModelGraph build_model(const ArchitectureSpec& spec, ModelVariant variant, double temperature) {
  return spec.family == Family::kCifar ? build_cifar(spec, variant, temperature)
                                       : build_imagenet(spec, variant, temperature);
}

ParameterCount count_parameters(const ModelGraph& graph) {
  ParameterCount pc;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const Layer& l = graph.layers[i];
    int64_t n = 0;
    if (l.kind == LayerKind::kConv) n = l.shape.size();
    if (l.kind == LayerKind::kBatchNorm && l.affine) n = 2 * l.channels();
    if (n == 0) continue;
    pc.per_layer.push_back({static_cast<int>(i), l.name, n});
    pc.total += n;
  }
  return pc;
}

std::vector<Shape> infer_shapes(const ModelGraph& graph, Shape input) {
  std::vector<Shape> out;
  out.reserve(graph.layers.size());
  auto in_shape = [&](int idx) -> Shape { return idx == kNetworkInput ? input : out[static_cast<size_t>(idx)]; };
  for (const Layer& l : graph.layers) {
    const Shape x = in_shape(l.inputs.front());
    Shape y = x;
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kMaxPool: {
        if (x.c != l.shape.w) throw ShapeError(l.name + ": channel mismatch " + x.str());
        const WindowGeometry g = WindowGeometry::make(x.h, x.w, l.shape.k, l.shape.h, l.stride, l.pad);
        y = Shape{x.k, g.out_h, g.out_w, l.shape.c};
        break;
      }
      case LayerKind::kShortcut:
        y = Shape{x.k, (x.h + l.stride - 1) / l.stride, (x.w + l.stride - 1) / l.stride, l.shape.c};
        break;
      case LayerKind::kAdd:
        if (in_shape(l.inputs[1]) != x) {
          throw ShapeError(l.name + ": shortcut join " + x.str() + " vs " + in_shape(l.inputs[1]).str());
        }
        break;
      case LayerKind::kGlobalAvgPool:
        y = Shape{x.k, 1, 1, x.c};
        break;
      default:
        if (x.c != l.channels()) throw ShapeError(l.name + ": channel mismatch " + x.str());
        break;
    }
    out.push_back(y);
  }
  return out;
}

}  // namespace bnfree
