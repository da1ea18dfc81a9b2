#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bnfree/config.hpp"

namespace bnfree::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitDivergence = 4,
  kExitVerification = 5,
};

/// Everything needed to replay a run. Serialised as a config file whose
/// provenance lines are comments, so `train --config manifest.txt`
/// reproduces the metric trace.
struct RunManifest {
  TrainConfig config;
  std::string code_version;
  uint32_t train_checksum = 0;
  uint32_t test_checksum = 0;
  std::filesystem::path model_path;
  std::filesystem::path metrics_path;

  std::string to_text() const;
};

/// Flags shared by the commands that build a TrainConfig.
struct ConfigFlags {
  std::optional<std::filesystem::path> config;
  std::optional<std::string> dataset;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> variant;
  std::optional<double> width;
  std::optional<int> bits;
  std::optional<double> temperature;
  std::vector<std::string> set;  // key=value overrides, applied last

  TrainConfig resolve() const;
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

int cmd_train(const ConfigFlags& flags, const std::filesystem::path& out_dir, Streams io);
int cmd_eval(const ConfigFlags& flags, const std::filesystem::path& model_file, Streams io);
int cmd_gradcheck(uint64_t seed, const std::string& mutate, Streams io);
int cmd_cost(const ConfigFlags& flags, std::optional<int> classes, Streams io);
int cmd_compare(const ConfigFlags& flags, const std::filesystem::path& matrix_file,
                const std::optional<std::filesystem::path>& out_dir, Streams io);
int cmd_export_text(const ConfigFlags& flags, const std::optional<std::filesystem::path>& model_file, Streams io);

/// One row of a comparison matrix file: "<variant> <width> <bits>".
struct MatrixCell {
  ModelVariant variant;
  double width;
  int bits;
};

struct Matrix {
  std::vector<MatrixCell> cells;
  int repeats = 1;
};

/// Lines are cells or "repeats <n>"; '#' starts a comment. ConfigError on
/// malformed rows.
Matrix parse_matrix(const std::string& text);

struct CellSummary {
  MatrixCell cell;
  std::vector<double> errors;  // one per converged repeat, percent
  int divergent = 0;
  double mean = 0.0, min = 0.0, max = 0.0;
  double gap = 0.0;  // mean minus the best mean among cells with the same width and bits
};

/// Fills mean/min/max/gap from the per-repeat errors.
std::vector<CellSummary> summarize(std::vector<CellSummary> cells);
std::string format_summary(const std::vector<CellSummary>& cells);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, Streams io);

}  // namespace bnfree::cli
