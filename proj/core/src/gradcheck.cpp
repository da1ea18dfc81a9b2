#include "bnfree/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bnfree/error.hpp"

namespace bnfree {
namespace {

double evaluate(const ScalarGraph& f, const Tensor64& x) {
  Tape<double> tape;
  const NodeId leaf = tape.leaf(x);
  const NodeId out = f(tape, leaf);
  const Tensor64& v = tape.value(out);
  if (v.shape() != Shape{1, 1, 1, 1}) throw ShapeError("gradient check needs a scalar function");
  return v[0];
}

}  // namespace

Tensor64 numeric_gradient(const ScalarGraph& f, const Tensor64& x, double eps) {
  if (!(eps > 0.0)) throw ShapeError("finite difference step must be positive");
  Tensor64 g(x.shape());
  Tensor64 probe = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = evaluate(f, probe);
    probe[i] = x[i] - eps;
    const double down = evaluate(f, probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

Tensor64 analytic_gradient(const ScalarGraph& f, const Tensor64& x) {
  Tape<double> tape;
  const NodeId leaf = tape.leaf(x);
  const NodeId out = f(tape, leaf);
  tape.backward(out);
  const Tensor64* g = tape.grad(leaf);
  return g ? *g : Tensor64(x.shape());
}

GradCheckResult compare_gradients(const Tensor64& analytic, const Tensor64& numeric) {
  if (analytic.shape() != numeric.shape()) throw ShapeError("gradient shapes differ");
  GradCheckResult r;
  for (int64_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-12});
    const double rel = std::abs(a - n) / denom;
    if (r.worst_index < 0 || rel > r.max_rel_error) {
      r = GradCheckResult{rel, i, a, n};
    }
  }
  return r;
}

GradCheckResult finite_difference_check(const ScalarGraph& f, const Tensor64& x, double eps) {
  return compare_gradients(analytic_gradient(f, x), numeric_gradient(f, x, eps));
}

}  // namespace bnfree
