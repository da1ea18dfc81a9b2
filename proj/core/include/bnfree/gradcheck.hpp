#pragma once

#include <cstdint>
#include <functional>

#include "bnfree/tape.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {

/// Builds a scalar-valued graph on `tape` from the leaf `x`; must be a pure
/// function of the leaf value so it can be re-evaluated at perturbed points.
using ScalarGraph = std::function<NodeId(Tape<double>& tape, NodeId x)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference gradient of f at x, one element at a time.
Tensor64 numeric_gradient(const ScalarGraph& f, const Tensor64& x, double eps = 1e-5);

/// Gradient of f at x from the tape's reverse pass.
Tensor64 analytic_gradient(const ScalarGraph& f, const Tensor64& x);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-12) between the analytic gradient
/// a and the central difference n.
GradCheckResult finite_difference_check(const ScalarGraph& f, const Tensor64& x, double eps = 1e-5);

/// Same metric for two precomputed gradients.
GradCheckResult compare_gradients(const Tensor64& analytic, const Tensor64& numeric);

}  // namespace bnfree
