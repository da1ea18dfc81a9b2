#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnfree/model.hpp"

namespace bnfree {

/// Arithmetic census for one inference of one sample.
struct OpCount {
  int64_t multiplies = 0;
  int64_t add_subs = 0;
  int64_t comparisons = 0;
  int64_t exponentials = 0;
  int64_t weight_bits = 0;

  OpCount& operator+=(const OpCount& o);
  friend bool operator==(const OpCount&, const OpCount&) = default;
};

struct LayerCost {
  int layer = 0;
  std::string name;
  LayerKind kind = LayerKind::kConv;
  OpCount ops;
};

struct CostReport {
  std::vector<LayerCost> layers;
  OpCount total;
};

/// Counting rules per output element:
///  - float conv: R*S*Cin multiplies, R*S*Cin - 1 adds
///  - packed conv: R*S*Cin sign-selected adds, 1 multiply by sigma0
///  - ReLU / sReLU: 1 comparison
///  - ELU: 1 comparison, 1 exponential, 1 add (worst case, negative input)
///  - BN / standardisation inference: 1 multiply, 1 add
///  - mean-only BN: 1 add; scale: 1 multiply; residual add: 1 add
///  - shortcut: window-1 adds and 1 multiply per pooled element
///  - max pool: window^2 - 1 comparisons; GAP: H*W - 1 adds, 1 multiply
/// weight_bits counts conv weights at 1 bit (quantized) or 32 bits each.
/// `quantized` overrides the per-layer flag so float and packed builds of
/// one graph can be compared.
CostReport cost_report(const ModelGraph& graph, bool quantized, Shape input);

/// Side-by-side float / packed table with per-layer and total rows.
std::string format_cost_comparison(const CostReport& fp32, const CostReport& packed);

}  // namespace bnfree
