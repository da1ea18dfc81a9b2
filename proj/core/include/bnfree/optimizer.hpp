#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bnfree/network.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

/// lr_end + (lr_start - lr_end) * (1 + cos(pi * e / E)) / 2, evaluated so
/// that e = 0 and e = E return lr_start and lr_end exactly. ShapeError
/// unless 0 <= e <= E and E >= 1.
double cosine_lr(int epoch, int total_epochs, double lr_start, double lr_end);

struct SgdSettings {
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

/// Momentum buffers mirroring the parameter list, plus position counters
/// used in divergence diagnostics.
struct OptimizerState {
  std::vector<std::vector<float>> velocity;
  int epoch = 0;
  int step = 0;

  static OptimizerState for_parameters(std::span<const ParamRef> params);
};

/// g' = grad + wd * w (wd only where the parameter asks for it);
/// v = momentum * v + g'; w -= lr * v.
/// Throws ShapeError on mismatched sizes and DivergenceError on a non-finite
/// gradient (parameters are left untouched in that case).
void sgd_step(std::span<const ParamRef> params, std::span<const Tensor> grads, OptimizerState& state, double lr,
              const SgdSettings& cfg);

}  // namespace bnfree
