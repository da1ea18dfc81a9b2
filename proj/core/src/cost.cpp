#include "bnfree/cost.hpp"

#include <cstdio>
#include <sstream>

namespace bnfree {

OpCount& OpCount::operator+=(const OpCount& o) {
  multiplies += o.multiplies;
  add_subs += o.add_subs;
  comparisons += o.comparisons;
  exponentials += o.exponentials;
  weight_bits += o.weight_bits;
  return *this;
}

CostReport cost_report(const ModelGraph& graph, bool quantized, Shape input) {
  input.k = 1;
  const std::vector<Shape> shapes = infer_shapes(graph, input);
  CostReport report;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const Layer& l = graph.layers[i];
    const Shape& out = shapes[i];
    const int64_t elems = out.size();
    OpCount ops;
    switch (l.kind) {
      case LayerKind::kConv: {
        const int64_t patch = l.shape.k * l.shape.h * l.shape.w;
        if (quantized) {
          ops.add_subs = elems * patch;
          ops.multiplies = elems;
          ops.weight_bits = l.shape.size();
        } else {
          ops.multiplies = elems * patch;
          ops.add_subs = elems * (patch - 1);
          ops.weight_bits = 32 * l.shape.size();
        }
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kSReLU:
        ops.comparisons = elems;
        break;
      case LayerKind::kELU:
        ops.comparisons = elems;
        ops.exponentials = elems;
        ops.add_subs = elems;
        break;
      case LayerKind::kBatchNorm:
      case LayerKind::kStandardize:
        ops.multiplies = elems;
        ops.add_subs = elems;
        break;
      case LayerKind::kMeanOnlyBN:
      case LayerKind::kAdd:
        ops.add_subs = elems;
        break;
      case LayerKind::kScale:
        ops.multiplies = elems;
        break;
      case LayerKind::kShortcut: {
        const int64_t window = static_cast<int64_t>(l.stride) * l.stride;
        const int64_t pooled = out.h * out.w * l.shape.w;
        if (window > 1) {
          ops.add_subs = pooled * (window - 1);
          ops.multiplies = pooled;
        }
        break;
      }
      case LayerKind::kMaxPool:
        ops.comparisons = elems * (l.shape.k * l.shape.h - 1);
        break;
      case LayerKind::kGlobalAvgPool: {
        const Shape& in = l.inputs.front() == kNetworkInput ? input : shapes[static_cast<size_t>(l.inputs.front())];
        ops.add_subs = in.c * (in.spatial() - 1);
        ops.multiplies = in.c;
        break;
      }
      case LayerKind::kSoftmax:
        break;
    }
    report.layers.push_back({static_cast<int>(i), l.name, l.kind, ops});
    report.total += ops;
  }
  return report;
}

std::string format_cost_comparison(const CostReport& fp32, const CostReport& packed) {
  std::ostringstream os;
  char line[512];
  std::snprintf(line, sizeof line, "%-4s %-22s %-12s %14s %14s %12s %14s %14s %12s %12s %12s\n", "idx", "layer",
                "kind", "mul_fp32", "add_fp32", "cmp", "mul_1bit", "add_1bit", "exp", "wbits_fp32", "wbits_1bit");
  os << line;
  auto row = [&](const std::string& idx, const std::string& name, std::string_view kind, const OpCount& f,
                 const OpCount& p) {
    std::snprintf(line, sizeof line, "%-4s %-22s %-12s %14lld %14lld %12lld %14lld %14lld %12lld %12lld %12lld\n",
                  idx.c_str(), name.c_str(), std::string(kind).c_str(), static_cast<long long>(f.multiplies),
                  static_cast<long long>(f.add_subs), static_cast<long long>(f.comparisons),
                  static_cast<long long>(p.multiplies), static_cast<long long>(p.add_subs),
                  static_cast<long long>(f.exponentials), static_cast<long long>(f.weight_bits),
                  static_cast<long long>(p.weight_bits));
    os << line;
  };
  for (size_t i = 0; i < fp32.layers.size() && i < packed.layers.size(); ++i) {
    const LayerCost& f = fp32.layers[i];
    row(std::to_string(f.layer), f.name, kind_name(f.kind), f.ops, packed.layers[i].ops);
  }
  row("-", "total", "", fp32.total, packed.total);
  return os.str();
}

}  // namespace bnfree
