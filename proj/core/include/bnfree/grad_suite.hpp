#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnfree/gradcheck.hpp"

namespace bnfree {

struct GradCheckEntry {
  std::string op;
  std::string wrt;
  GradCheckResult result;
  bool passed = false;
};

struct GradSuiteOptions {
  uint64_t seed = 20240601;
  double tolerance = 1e-4;
  // Op name whose backward is deliberately corrupted (gradient scaled by
  // 1.5); empty for a normal run.
  std::string mutate;
};

/// Names accepted by GradSuiteOptions::mutate, in report order.
std::vector<std::string> gradient_suite_ops();

/// Finite-difference checks in double precision over every differentiable
/// layer on seeded random inputs. ShapeError for an unknown mutate name.
std::vector<GradCheckEntry> run_gradient_suite(const GradSuiteOptions& options = {});

/// One row per entry: op, wrt, max relative error, PASS/FAIL.
std::string format_gradient_report(const std::vector<GradCheckEntry>& entries, double tolerance);

}  // namespace bnfree
