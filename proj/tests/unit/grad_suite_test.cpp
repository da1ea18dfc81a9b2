#include <gtest/gtest.h>

#include <set>

#include "bnfree/error.hpp"
#include "bnfree/grad_suite.hpp"

namespace bnfree {
namespace {

TEST(GradSuite, AllOpsPass) {
  auto entries = run_gradient_suite();
  std::set<std::string> covered;
  for (const auto& e : entries) {
    EXPECT_TRUE(e.passed) << e.op << " wrt " << e.wrt << ": " << e.result.max_rel_error;
    covered.insert(e.op);
  }
  for (const auto& op : gradient_suite_ops()) EXPECT_TRUE(covered.count(op)) << op;
}

TEST(GradSuite, MutatedOpIsCaught) {
  for (const char* op : {"srelu", "conv", "batchnorm_train", "ste"}) {
    GradSuiteOptions opt;
    opt.mutate = op;
    bool caught = false;
    for (const auto& e : run_gradient_suite(opt)) {
      if (e.op == op) caught = caught || !e.passed;
      if (e.op != op) EXPECT_TRUE(e.passed) << e.op;
    }
    EXPECT_TRUE(caught) << op;
  }
}

TEST(GradSuite, UnknownMutation) {
  GradSuiteOptions opt;
  opt.mutate = "dropout";
  EXPECT_THROW(run_gradient_suite(opt), ShapeError);
}

}  // namespace
}  // namespace bnfree
