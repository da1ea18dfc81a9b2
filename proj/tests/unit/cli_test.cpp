#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bnfree/model.hpp"
#include "commands.hpp"

namespace bnfree::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "bnfree");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), Streams{out, err});
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("bnfree_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

const std::vector<std::string> kTiny = {"--set", "depth=8",          "--set", "width=1",
                                        "--set", "epochs=2",         "--set", "batch_size=16",
                                        "--set", "synthetic_train=32", "--set", "synthetic_test=16",
                                        "--set", "synthetic_size=8", "--set", "cutout_size=4"};

std::vector<std::string> with_tiny(std::vector<std::string> head) {
  head.insert(head.end(), kTiny.begin(), kTiny.end());
  return head;
}

std::string last_line(const std::string& s) {
  std::string t = s;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  return t.substr(t.rfind('\n') == std::string::npos ? 0 : t.rfind('\n') + 1);
}

TEST_F(CliDir, TrainThenEvalReproducesTestError) {
  Result t = invoke(with_tiny({"train", "--variant", "sreluonly", "--bits", "1", "--out", dir.string()}));
  ASSERT_EQ(t.code, 0) << t.err;
  ASSERT_TRUE(fs::exists(dir / "model.bnwm"));
  const std::string metrics = slurp(dir / "metrics.txt");
  const std::string manifest = slurp(dir / "manifest.txt");
  EXPECT_NE(manifest.find("temperature=50\n"), std::string::npos);
  EXPECT_NE(manifest.find("quantized=true\n"), std::string::npos);
  EXPECT_NE(manifest.find("# train_checksum="), std::string::npos);
  const std::string final_line = last_line(metrics);
  const std::string err = final_line.substr(final_line.find("test_err=") + 9);

  Result e = invoke({"eval", "--config", (dir / "manifest.txt").string(), "--model", (dir / "model.bnwm").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("split=test samples=16 top1_err=" + err), std::string::npos) << e.out << " vs " << err;
}

TEST_F(CliDir, ManifestReplayIsByteIdentical) {
  ASSERT_EQ(invoke(with_tiny({"train", "--variant", "baseline1", "--out", (dir / "a").string()})).code, 0);
  Result r = invoke({"train", "--config", (dir / "a" / "manifest.txt").string(), "--out", (dir / "b").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "a" / "metrics.txt"), slurp(dir / "b" / "metrics.txt"));
  EXPECT_EQ(slurp(dir / "a" / "model.bnwm"), slurp(dir / "b" / "model.bnwm"));
}

TEST_F(CliDir, MissingAndCorruptModelAreIoErrors) {
  EXPECT_EQ(invoke({"eval", "--model", (dir / "none.bnwm").string()}).code, kExitIo);
  ASSERT_EQ(invoke(with_tiny({"train", "--variant", "eluonly", "--out", dir.string()})).code, 0);
  std::string bytes = slurp(dir / "model.bnwm");
  bytes[bytes.size() / 2] ^= 0x01;
  std::ofstream(dir / "bad.bnwm", std::ios::binary) << bytes;
  Result r = invoke(with_tiny({"eval", "--model", (dir / "bad.bnwm").string()}));
  EXPECT_EQ(r.code, kExitIo);
  EXPECT_NE(r.err.find("checksum"), std::string::npos) << r.err;
}

TEST_F(CliDir, CompareRunsEveryCell) {
  std::ofstream(dir / "m.txt") << "# two variants, two widths\nrepeats 1\nbaseline2 1 32\nsreluonly 1 32\n"
                                  "baseline2 0.5 32\nsreluonly 0.5 32\n";
  Result r = invoke(with_tiny({"compare", "--matrix", (dir / "m.txt").string(), "--out", dir.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  size_t runs = 0;
  for (size_t p = r.out.find("run variant="); p != std::string::npos; p = r.out.find("run variant=", p + 1)) ++runs;
  EXPECT_EQ(runs, 4u);
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
}

TEST(Cli, UnknownVariantIsUsageError) {
  Result r = invoke({"train", "--variant", "batchrenorm", "--out", "/tmp/unused"});
  EXPECT_EQ(r.code, kExitUsage);
  for (ModelVariant v : kAllVariants) EXPECT_NE(r.err.find(variant_name(v)), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({"train"}).code, kExitUsage);
  EXPECT_EQ(invoke({"cost", "--bits", "8"}).code, kExitUsage);
  EXPECT_EQ(invoke({"cost", "--set", "nonsense=1"}).code, kExitUsage);
  EXPECT_EQ(invoke({"eval", "--model", "x", "--config", "/nonexistent/config.txt"}).code, kExitIo);
}

TEST(Cli, Version) {
  Result r = invoke({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_FALSE(r.out.empty());
}

TEST(Cli, GradcheckPassesAndMutationFails) {
  Result ok = invoke({"gradcheck"});
  EXPECT_EQ(ok.code, 0) << ok.out;
  Result bad = invoke({"gradcheck", "--mutate", "srelu"});
  EXPECT_EQ(bad.code, kExitVerification);
  EXPECT_NE(bad.out.find("FAILED: srelu"), std::string::npos) << bad.out;
  EXPECT_EQ(invoke({"gradcheck", "--mutate", "nosuchop"}).code, kExitUsage);
}

TEST(Cli, CostReportsOneThirtySecond) {
  Result r = invoke({"cost", "--variant", "baseline1", "--width", "4", "--bits", "1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ratio=1/32"), std::string::npos) << r.out;
}

TEST(Cli, ExportTextListsLayers) {
  Result r = invoke({"export-text", "--set", "depth=8", "--variant", "meanonlyfinal"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("final_meanbn"), std::string::npos);
}

TEST(Matrix, ParseAndErrors) {
  Matrix m = parse_matrix("repeats 3\n# x\nbaseline1 4 1\neluonly 10 32\n");
  EXPECT_EQ(m.repeats, 3);
  ASSERT_EQ(m.cells.size(), 2u);
  EXPECT_EQ(m.cells[1].variant, ModelVariant::kELUOnly);
  EXPECT_EQ(m.cells[1].width, 10.0);
  EXPECT_ANY_THROW(parse_matrix("baseline1 4 8\n"));
  EXPECT_ANY_THROW(parse_matrix("nosuch 4 1\n"));
  EXPECT_ANY_THROW(parse_matrix("repeats 0\n"));
}

TEST(Matrix, GapIsRelativeToBestInSameWidthAndBits) {
  std::vector<CellSummary> cells = {
      {{ModelVariant::kBaseline1, 4, 1}, {4.0, 6.0}},
      {{ModelVariant::kSReLUOnly, 4, 1}, {3.0}},
      {{ModelVariant::kBaseline1, 4, 32}, {2.0}},
      {{ModelVariant::kSReLUOnly, 4, 32}, {}, 2},
  };
  auto s = summarize(cells);
  EXPECT_DOUBLE_EQ(s[0].mean, 5.0);
  EXPECT_DOUBLE_EQ(s[0].min, 4.0);
  EXPECT_DOUBLE_EQ(s[0].max, 6.0);
  EXPECT_DOUBLE_EQ(s[0].gap, 2.0);
  EXPECT_DOUBLE_EQ(s[1].gap, 0.0);
  EXPECT_DOUBLE_EQ(s[2].gap, 0.0);
  EXPECT_EQ(s[3].divergent, 2);
  EXPECT_FALSE(format_summary(s).empty());
}

}  // namespace
}  // namespace bnfree::cli
