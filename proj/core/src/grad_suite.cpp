#include "bnfree/grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <random>

#include "bnfree/activation.hpp"
#include "bnfree/binary.hpp"
#include "bnfree/error.hpp"
#include "bnfree/norm.hpp"
#include "bnfree/ops.hpp"
#include "bnfree/rng.hpp"
#include "bnfree/softmax.hpp"

namespace bnfree {
namespace {

using Rng = std::mt19937_64;

Tensor64 uniform(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor64 t(s);
  for (double& v : t.data()) v = d(rng);
  return t;
}

// Moves entries within `margin` of `kink` to kink +/- margin so central
// differences never straddle it.
Tensor64 away_from(Tensor64 t, double kink, double margin) {
  for (double& v : t.data()) {
    if (std::abs(v - kink) < margin) v = v < kink ? kink - margin : kink + margin;
  }
  return t;
}

// Identity forward; backward passes on 1.5x the gradient.
NodeId corrupt(Tape<double>& tape, NodeId y) {
  return tape.record(tape.value(y), {y}, [y](Tape<double>& t, NodeId self) {
    Tensor64 g = *t.grad(self);
    for (double& v : g.data()) v *= 1.5;
    t.accumulate(y, g);
  });
}

class Suite {
 public:
  explicit Suite(const GradSuiteOptions& o) : opt_(o), rng_(make_rng(o.seed, RngStream::kTest)) {}

  // Wraps an op output, corrupting it when the op is the mutation target.
  NodeId out(Tape<double>& t, NodeId y, const std::string& op) const { return op == opt_.mutate ? corrupt(t, y) : y; }

  // Scalar projection with random, fixed sensitivities.
  ScalarGraph project(const std::string& op, std::function<NodeId(Tape<double>&, NodeId)> body) {
    auto weights = std::make_shared<std::optional<Tensor64>>();
    auto rng = std::make_shared<Rng>(rng_());
    return [this, op, body, weights, rng](Tape<double>& t, NodeId x) {
      const NodeId y = out(t, body(t, x), op);
      if (!*weights) *weights = uniform(t.value(y).shape(), *rng, -1.0, 1.0);
      return weighted_sum(t, y, **weights);
    };
  }

  void check(const std::string& op, const std::string& wrt, const ScalarGraph& f, const Tensor64& x) {
    add(op, wrt, finite_difference_check(f, x));
  }

  void add(const std::string& op, const std::string& wrt, const GradCheckResult& r) {
    entries_.push_back({op, wrt, r, r.max_rel_error < opt_.tolerance});
  }

  Rng& rng() { return rng_; }
  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  const GradSuiteOptions& opt_;
  Rng rng_;
  std::vector<GradCheckEntry> entries_;
};

void conv_checks(Suite& s) {
  Rng& rng = s.rng();
  struct Config {
    Shape in, w;
    int stride;
    Padding pad;
  };
  const Config configs[] = {
      {{2, 5, 5, 3}, {3, 3, 3, 4}, 1, Padding::same()},
      {{2, 6, 7, 2}, {3, 3, 2, 3}, 2, Padding::same()},
      {{1, 9, 9, 2}, {7, 7, 2, 2}, 2, Padding::exact(3)},
      {{2, 4, 4, 3}, {1, 1, 3, 5}, 1, Padding::same()},
  };
  for (const Config& c : configs) {
    const Tensor64 x = uniform(c.in, rng);
    const Tensor64 w = uniform(c.w, rng);
    s.check("conv", "input", s.project("conv", [w, c](Tape<double>& t, NodeId in) {
      return conv2d(t, in, t.leaf(w, false), c.stride, c.pad);
    }), x);
    s.check("conv", "weights", s.project("conv", [x, c](Tape<double>& t, NodeId wn) {
      return conv2d(t, t.leaf(x, false), wn, c.stride, c.pad);
    }), w);
  }
}

void bn_checks(Suite& s) {
  Rng& rng = s.rng();
  const Shape xs{4, 3, 3, 3};
  const Tensor64 x = uniform(xs, rng, -2.0, 3.0);
  const Tensor64 gain = uniform({1, 1, 1, 3}, rng, 0.5, 1.5);
  const Tensor64 shift = uniform({1, 1, 1, 3}, rng);
  const double eps = kDefaultBNEpsilon;
  s.check("batchnorm_train", "input", s.project("batchnorm_train", [=](Tape<double>& t, NodeId in) {
    return batch_norm_train(t, in, t.leaf(gain, false), t.leaf(shift, false), eps);
  }), x);
  s.check("batchnorm_train", "gain", s.project("batchnorm_train", [=](Tape<double>& t, NodeId g) {
    return batch_norm_train(t, t.leaf(x, false), g, t.leaf(shift, false), eps);
  }), gain);
  s.check("batchnorm_train", "shift", s.project("batchnorm_train", [=](Tape<double>& t, NodeId o) {
    return batch_norm_train(t, t.leaf(x, false), t.leaf(gain, false), o, eps);
  }), shift);

  BasicBNParams<double> p = BasicBNParams<double>::make(3, true);
  p.mean = {0.2, -0.1, 0.4};
  p.var = {0.8, 1.3, 0.5};
  p.finalized = true;
  s.check("batchnorm_infer", "input", s.project("batchnorm_infer", [=](Tape<double>& t, NodeId in) {
    return batch_norm_infer(t, in, t.leaf(gain, false), t.leaf(shift, false), p);
  }), x);

  BasicBNParams<double> mo = BasicBNParams<double>::make(3, false, true);
  s.check("meanonly_bn", "input (train)", s.project("meanonly_bn", [=](Tape<double>& t, NodeId in) {
    return mean_only_bn(t, in, mo, NormMode::kTrain);
  }), x);
  BasicBNParams<double> mof = mo;
  mof.mean = {0.1, 0.2, -0.3};
  mof.var = {1.0, 1.0, 1.0};
  mof.finalized = true;
  s.check("meanonly_bn", "input (infer)", s.project("meanonly_bn", [=](Tape<double>& t, NodeId in) {
    return mean_only_bn(t, in, mof, NormMode::kInfer);
  }), x);

  const std::vector<double> mean{0.4, 0.5, 0.45}, stddev{0.25, 0.3, 0.2};
  s.check("standardize", "input", s.project("standardize", [=](Tape<double>& t, NodeId in) {
    return standardize(t, in, mean, stddev);
  }), x);
}

void activation_checks(Suite& s) {
  Rng& rng = s.rng();
  const Shape xs{2, 3, 3, 4};
  const double margin = 1e-3;
  s.check("relu", "input", s.project("relu", [](Tape<double>& t, NodeId in) { return relu(t, in); }),
          away_from(uniform(xs, rng, -2.0, 2.0), 0.0, margin));
  s.check("srelu", "input", s.project("srelu", [](Tape<double>& t, NodeId in) { return srelu(t, in); }),
          away_from(uniform(xs, rng, -3.0, 1.0), -1.0, margin));
  s.check("elu", "input", s.project("elu", [](Tape<double>& t, NodeId in) { return elu(t, in); }),
          away_from(uniform(xs, rng, -3.0, 2.0), 0.0, margin));
  s.check("scale", "input", s.project("scale", [](Tape<double>& t, NodeId in) { return scale_layer(t, in, 50.0); }),
          uniform(xs, rng, -5.0, 5.0));
}

void structural_checks(Suite& s) {
  Rng& rng = s.rng();
  const Tensor64 x = uniform({3, 4, 5, 3}, rng);
  s.check("gap", "input", s.project("gap", [](Tape<double>& t, NodeId in) { return global_average_pool(t, in); }), x);

  const Tensor64 b = uniform(x.shape(), rng);
  s.check("add", "input", s.project("add", [b](Tape<double>& t, NodeId in) {
    return add(t, relu(t, in), t.leaf(b, false));
  }), away_from(x, 0.0, 1e-3));
  s.check("add", "both operands", s.project("add", [](Tape<double>& t, NodeId in) { return add(t, in, in); }), x);

  // Distinct values keep each pooling window's maximum unique.
  Tensor64 pool_in({2, 6, 5, 2});
  std::vector<double> vals(static_cast<size_t>(pool_in.size()));
  for (size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
  std::shuffle(vals.begin(), vals.end(), rng);
  for (int64_t i = 0; i < pool_in.size(); ++i) pool_in[i] = vals[static_cast<size_t>(i)];
  s.check("maxpool", "input", s.project("maxpool", [](Tape<double>& t, NodeId in) {
    return max_pool(t, in, 3, 2, Padding::exact(1));
  }), pool_in);

  s.check("shortcut", "input", s.project("shortcut", [](Tape<double>& t, NodeId in) {
    return shortcut_downsample(t, in, 2, 5);
  }), uniform({2, 5, 4, 3}, rng));
}

void xent_checks(Suite& s, const std::string& mutate) {
  Rng& rng = s.rng();
  const int64_t k = 6, n = 5;
  std::vector<int> labels(static_cast<size_t>(k));
  std::uniform_int_distribution<int> lab(0, static_cast<int>(n) - 1);
  for (int& y : labels) y = lab(rng);
  for (double spread : {1.0, 3.0}) {
    const Tensor64 z = uniform({k, 1, 1, n}, rng, -spread, spread);
    const ScalarGraph f = [labels, &s, mutate](Tape<double>& t, NodeId in) {
      const NodeId logits = mutate == "softmax_xent" ? s.out(t, in, "softmax_xent") : in;
      return softmax_xent(t, logits, labels).loss;
    };
    s.check("softmax_xent", spread > 1.0 ? "logits (spread 3)" : "logits", f, z);
  }
}

// Shadow-weight gradient through the straight-through sign must equal
// sigma0 times the loss gradient w.r.t. the binarized weights.
void ste_checks(Suite& s, const std::string& mutate) {
  Rng& rng = s.rng();
  const Shape ws{3, 3, 2, 3};
  const double sigma0 = he_std(ws.k * ws.h * ws.c);
  const Tensor64 x = uniform({2, 5, 5, 2}, rng);
  const Tensor64 shadow = away_from(uniform(ws, rng), 0.0, 1e-3);
  const Tensor64 proj = uniform({2, 5, 5, 3}, rng);

  const ScalarGraph through_sign = [&](Tape<double>& t, NodeId w) {
    NodeId b = binarize(t, w, sigma0);
    if (mutate == "ste") b = s.out(t, b, "ste");
    return weighted_sum(t, srelu(t, conv2d(t, t.leaf(x, false), b, 1, Padding::same())), proj);
  };
  const ScalarGraph on_binary = [&](Tape<double>& t, NodeId b) {
    return weighted_sum(t, srelu(t, conv2d(t, t.leaf(x, false), b, 1, Padding::same())), proj);
  };
  const Tensor64 analytic = analytic_gradient(through_sign, shadow);
  Tensor64 expected = numeric_gradient(on_binary, binarize_forward(shadow, sigma0));
  for (double& v : expected.data()) v *= sigma0;
  s.add("ste", "shadow weights", compare_gradients(analytic, expected));
}

}  // namespace

std::vector<std::string> gradient_suite_ops() {
  return {"conv",    "batchnorm_train", "batchnorm_infer", "meanonly_bn", "standardize", "relu",
          "srelu",   "elu",             "scale",           "gap",         "add",         "maxpool",
          "shortcut", "softmax_xent",   "ste"};
}

std::vector<GradCheckEntry> run_gradient_suite(const GradSuiteOptions& options) {
  if (!options.mutate.empty()) {
    const auto ops = gradient_suite_ops();
    if (std::find(ops.begin(), ops.end(), options.mutate) == ops.end()) {
      throw ShapeError("unknown op '" + options.mutate + "' for mutation");
    }
  }
  Suite s(options);
  conv_checks(s);
  bn_checks(s);
  activation_checks(s);
  structural_checks(s);
  xent_checks(s, options.mutate);
  ste_checks(s, options.mutate);
  return s.take();
}

std::string format_gradient_report(const std::vector<GradCheckEntry>& entries, double tolerance) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %-20s %14s  %s\n", "op", "wrt", "max_rel_err", "status");
  out += buf;
  for (const GradCheckEntry& e : entries) {
    std::snprintf(buf, sizeof buf, "%-16s %-20s %14.3e  %s\n", e.op.c_str(), e.wrt.c_str(), e.result.max_rel_error,
                  e.passed ? "PASS" : "FAIL");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "tolerance %.1e\n", tolerance);
  out += buf;
  return out;
}

}  // namespace bnfree
