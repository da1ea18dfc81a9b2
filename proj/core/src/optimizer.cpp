#include "bnfree/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bnfree/error.hpp"

namespace bnfree {

double cosine_lr(int epoch, int total_epochs, double lr_start, double lr_end) {
  if (total_epochs < 1) throw ShapeError("cosine_lr needs at least one epoch");
  if (epoch < 0 || epoch > total_epochs) {
    throw ShapeError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total_epochs) + "]");
  }
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
  return w * lr_start + (1.0 - w) * lr_end;
}

OptimizerState OptimizerState::for_parameters(std::span<const ParamRef> params) {
  OptimizerState s;
  s.velocity.reserve(params.size());
  for (const ParamRef& p : params) s.velocity.emplace_back(p.value.size(), 0.0f);
  return s;
}

void sgd_step(std::span<const ParamRef> params, std::span<const Tensor> grads, OptimizerState& state, double lr,
              const SgdSettings& cfg) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and buffer counts differ");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != static_cast<int64_t>(params[i].value.size()) ||
        state.velocity[i].size() != params[i].value.size()) {
      throw ShapeError("sgd_step: size mismatch for parameter " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw DivergenceError("non-finite gradient for parameter of layer " + std::to_string(params[i].layer),
                            state.epoch, state.step);
    }
  }
  for (size_t i = 0; i < params.size(); ++i) {
    std::span<float> w = params[i].value;
    std::vector<float>& v = state.velocity[i];
    const float* g = grads[i].ptr();
    const double wd = params[i].weight_decay ? cfg.weight_decay : 0.0;
    for (size_t j = 0; j < w.size(); ++j) {
      const double gj = static_cast<double>(g[j]) + wd * w[j];
      const double vj = cfg.momentum * v[j] + gj;
      v[j] = static_cast<float>(vj);
      w[j] = static_cast<float>(w[j] - lr * vj);
    }
  }
  ++state.step;
}

}  // namespace bnfree
