#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "bnfree/cost.hpp"
#include "bnfree/error.hpp"
#include "bnfree/grad_suite.hpp"
#include "bnfree/model_io.hpp"
#include "bnfree/rng.hpp"

#ifndef BNFREE_VERSION
#define BNFREE_VERSION "unknown"
#endif

namespace bnfree::cli {
namespace {

std::string hex32(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

// Maps exceptions to exit codes and prints them.
int guarded(Streams io, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    io.err << "diverged: " << e.what() << " (epoch " << e.epoch() << ", step " << e.step() << ")\n";
    return kExitDivergence;
  } catch (const FormatError& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ShapeError& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const StateError& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::runtime_error& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    io.err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

ModelGraph graph_for(const TrainConfig& cfg, int classes) {
  ArchitectureSpec spec;
  spec.family = cfg.family;
  spec.depth = cfg.depth;
  spec.width = cfg.width;
  spec.num_classes = classes;
  spec.quantized = cfg.quantized;
  return build_model(spec, cfg.variant, cfg.resolved_temperature());
}

int default_classes(const TrainConfig& cfg) { return cfg.family == Family::kImageNet ? 1000 : 10; }

Shape default_input(const TrainConfig& cfg) {
  return cfg.family == Family::kImageNet ? Shape{1, 224, 224, 3} : Shape{1, 32, 32, 3};
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

std::string RunManifest::to_text() const {
  std::ostringstream o;
  o << "# bnfree run manifest\n"
    << "# code_version=" << code_version << '\n'
    << "# train_checksum=" << hex32(train_checksum) << '\n'
    << "# test_checksum=" << hex32(test_checksum) << '\n'
    << "# model=" << model_path.string() << '\n'
    << "# metrics=" << metrics_path.string() << '\n'
    << config_to_text(config);
  return o.str();
}

TrainConfig ConfigFlags::resolve() const {
  TrainConfig cfg = config ? load_config(*config) : TrainConfig{};
  if (dataset) apply_setting(cfg, "dataset", *dataset);
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  if (variant) apply_setting(cfg, "variant", *variant);
  if (width) cfg.width = *width;
  if (bits) apply_setting(cfg, "bits", std::to_string(*bits));
  if (temperature) cfg.temperature = *temperature;
  for (const std::string& kv : set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

int cmd_train(const ConfigFlags& flags, const std::filesystem::path& out_dir, Streams io) {
  return guarded(io, [&] {
    const TrainConfig cfg = flags.resolve();
    const DatasetSplits data = load_dataset(cfg);
    std::filesystem::create_directories(out_dir);

    RunManifest manifest;
    manifest.config = cfg;
    manifest.code_version = BNFREE_VERSION;
    manifest.train_checksum = dataset_checksum(data.train);
    manifest.test_checksum = dataset_checksum(data.test);
    manifest.model_path = out_dir / "model.bnwm";
    manifest.metrics_path = out_dir / "metrics.txt";
    write_text(out_dir / "manifest.txt", manifest.to_text());

    std::ofstream metrics(manifest.metrics_path, std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot open " + manifest.metrics_path.string());
    const TrainResult result = train(cfg, data, [&](const EpochMetrics& m) {
      metrics << m.to_line() << '\n' << std::flush;
      io.out << m.to_line() << '\n' << std::flush;
    });
    export_model(result.model, manifest.model_path);
    io.out << "model written to " << manifest.model_path.string() << '\n';
    return int{kExitOk};
  });
}

int cmd_eval(const ConfigFlags& flags, const std::filesystem::path& model_file, Streams io) {
  return guarded(io, [&] {
    const TrainConfig cfg = flags.resolve();
    const Model model = import_model(model_file);
    const DatasetSplits data = load_dataset(cfg);
    const Dataset& split = data.test.size() > 0 ? data.test : data.train;
    const EvalResult r = evaluate(model, split, cfg.batch_size, cfg.threads);
    io.out << "split=" << (data.test.size() > 0 ? "test" : "train") << " samples=" << r.samples
           << " top1_err=" << fixed4(r.top1_error());
    if (r.has_top5) io.out << " top5_err=" << fixed4(r.top5_error());
    io.out << '\n';
    return int{kExitOk};
  });
}

int cmd_gradcheck(uint64_t seed, const std::string& mutate, Streams io) {
  return guarded(io, [&] {
    GradSuiteOptions opt;
    opt.seed = seed;
    opt.mutate = mutate;
    std::vector<GradCheckEntry> entries;
    try {
      entries = run_gradient_suite(opt);
    } catch (const ShapeError& e) {
      throw ConfigError(e.what());
    }
    io.out << format_gradient_report(entries, opt.tolerance);
    std::vector<std::string> failed;
    for (const GradCheckEntry& e : entries) {
      if (!e.passed && std::find(failed.begin(), failed.end(), e.op) == failed.end()) failed.push_back(e.op);
    }
    if (failed.empty()) {
      io.out << "all gradient checks passed\n";
      return int{kExitOk};
    }
    io.out << "FAILED:";
    for (const std::string& op : failed) io.out << ' ' << op;
    io.out << '\n';
    return int{kExitVerification};
  });
}

int cmd_cost(const ConfigFlags& flags, std::optional<int> classes, Streams io) {
  return guarded(io, [&] {
    const TrainConfig cfg = flags.resolve();
    const ModelGraph g = graph_for(cfg, classes.value_or(default_classes(cfg)));
    const Shape input = default_input(cfg);
    const CostReport fp32 = cost_report(g, false, input);
    const CostReport packed = cost_report(g, true, input);
    io.out << variant_name(cfg.variant) << ' ' << family_name(cfg.family) << " depth " << cfg.depth << " width "
           << cfg.width << ", input " << input.h << 'x' << input.w << '\n';
    io.out << format_cost_comparison(fp32, packed);
    io.out << "weight_bits float=" << fp32.total.weight_bits << " packed=" << packed.total.weight_bits;
    if (packed.total.weight_bits > 0 && fp32.total.weight_bits == 32 * packed.total.weight_bits) io.out << " ratio=1/32";
    io.out << '\n';
    return int{kExitOk};
  });
}

Matrix parse_matrix(const std::string& text) {
  Matrix m;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream row(line);
    std::vector<std::string> tok;
    for (std::string t; row >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string where = "matrix line " + std::to_string(line_no) + ": ";
    if (tok[0] == "repeats") {
      if (tok.size() != 2) throw ConfigError(where + "expected 'repeats <n>'");
      try {
        m.repeats = std::stoi(tok[1]);
      } catch (const std::exception&) {
        throw ConfigError(where + "invalid repeat count");
      }
      if (m.repeats < 1) throw ConfigError(where + "repeats must be at least 1");
      continue;
    }
    if (tok.size() != 3) throw ConfigError(where + "expected '<variant> <width> <bits>'");
    const auto v = parse_variant(tok[0]);
    if (!v) throw ConfigError(where + "unknown variant '" + tok[0] + "'; expected one of " + variant_list());
    MatrixCell cell{*v, 0.0, 0};
    try {
      cell.width = std::stod(tok[1]);
      cell.bits = std::stoi(tok[2]);
    } catch (const std::exception&) {
      throw ConfigError(where + "invalid width or bits");
    }
    if (!(cell.width > 0.0)) throw ConfigError(where + "width must be positive");
    if (cell.bits != 1 && cell.bits != 32) throw ConfigError(where + "bits must be 1 or 32");
    m.cells.push_back(cell);
  }
  if (m.cells.empty()) throw ConfigError("matrix has no cells");
  return m;
}

std::vector<CellSummary> summarize(std::vector<CellSummary> cells) {
  std::map<std::pair<double, int>, double> best;
  for (CellSummary& c : cells) {
    if (c.errors.empty()) continue;
    c.min = *std::min_element(c.errors.begin(), c.errors.end());
    c.max = *std::max_element(c.errors.begin(), c.errors.end());
    double s = 0.0;
    for (double e : c.errors) s += e;
    c.mean = s / static_cast<double>(c.errors.size());
    const auto key = std::make_pair(c.cell.width, c.cell.bits);
    const auto it = best.find(key);
    if (it == best.end() || c.mean < it->second) best[key] = c.mean;
  }
  for (CellSummary& c : cells) {
    if (!c.errors.empty()) c.gap = c.mean - best.at({c.cell.width, c.cell.bits});
  }
  return cells;
}

std::string format_summary(const std::vector<CellSummary>& cells) {
  std::string out;
  char buf[192];
  std::snprintf(buf, sizeof buf, "%-14s %6s %4s %5s %9s %9s %9s %9s %9s\n", "variant", "width", "bits", "runs", "mean_err",
                "min_err", "max_err", "gap", "divergent");
  out += buf;
  for (const CellSummary& c : cells) {
    const std::string name(variant_name(c.cell.variant));
    if (c.errors.empty()) {
      std::snprintf(buf, sizeof buf, "%-14s %6g %4d %5d %9s %9s %9s %9s %9d\n", name.c_str(), c.cell.width,
                    c.cell.bits, 0, "na", "na", "na", "na", c.divergent);
    } else {
      std::snprintf(buf, sizeof buf, "%-14s %6g %4d %5zu %9.4f %9.4f %9.4f %9.4f %9d\n", name.c_str(), c.cell.width,
                    c.cell.bits, c.errors.size(), c.mean, c.min, c.max, c.gap, c.divergent);
    }
    out += buf;
  }
  return out;
}

int cmd_compare(const ConfigFlags& flags, const std::filesystem::path& matrix_file,
                const std::optional<std::filesystem::path>& out_dir, Streams io) {
  return guarded(io, [&] {
    const TrainConfig base = flags.resolve();
    std::ifstream in(matrix_file);
    if (!in) throw std::runtime_error("cannot open matrix " + matrix_file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const Matrix matrix = parse_matrix(ss.str());
    const DatasetSplits data = load_dataset(base);

    std::vector<CellSummary> cells;
    for (const MatrixCell& cell : matrix.cells) {
      CellSummary summary{cell, {}, 0};
      for (int r = 0; r < matrix.repeats; ++r) {
        TrainConfig cfg = base;
        cfg.variant = cell.variant;
        cfg.width = cell.width;
        cfg.quantized = cell.bits == 1;
        cfg.temperature = base.temperature;
        cfg.seed = derive_seed(base.seed, static_cast<uint64_t>(r));
        io.out << "run variant=" << variant_name(cell.variant) << " width=" << cell.width << " bits=" << cell.bits
               << " seed=" << cfg.seed;
        try {
          const TrainResult res = train(cfg, data);
          const double err = res.metrics.back().test_err
                                 ? *res.metrics.back().test_err
                                 : evaluate(res.model, data.train, cfg.batch_size, cfg.threads).top1_error();
          summary.errors.push_back(err);
          io.out << " err=" << fixed4(err) << '\n';
        } catch (const DivergenceError& e) {
          ++summary.divergent;
          io.out << " diverged at epoch " << e.epoch() << " step " << e.step() << '\n';
        }
        io.out << std::flush;
      }
      cells.push_back(std::move(summary));
    }
    const std::string table = format_summary(summarize(std::move(cells)));
    io.out << table;
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      write_text(*out_dir / "summary.txt", table);
    }
    return int{kExitOk};
  });
}

int cmd_export_text(const ConfigFlags& flags, const std::optional<std::filesystem::path>& model_file, Streams io) {
  return guarded(io, [&] {
    if (model_file) {
      const Model model = import_model(*model_file);
      io.out << model.graph().to_text();
      io.out << "learned_parameters=" << count_parameters(model.graph()).total << '\n';
      io.out << "file_bytes=" << std::filesystem::file_size(*model_file) << '\n';
      return int{kExitOk};
    }
    const TrainConfig cfg = flags.resolve();
    const ModelGraph g = graph_for(cfg, default_classes(cfg));
    io.out << g.to_text();
    io.out << "learned_parameters=" << count_parameters(g).total << '\n';
    return int{kExitOk};
  });
}

namespace {

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config, "Config file of key=value lines (a run manifest works too)");
  app->add_option("--dataset", f.dataset, "CIFAR binary directory, or 'synthetic'");
  app->add_option("--seed", f.seed, "Run seed");
  app->add_option("--threads", f.threads, "Evaluation threads")->check(CLI::PositiveNumber);
  app->add_option("--variant", f.variant, "One of: " + variant_list());
  app->add_option("--width", f.width, "Width multiplier")->check(CLI::PositiveNumber);
  app->add_option("--bits", f.bits, "Weight bits")->check(CLI::IsMember({1, 32}));
  app->add_option("--temperature", f.temperature, "Softmax temperature for scale-layer variants");
  app->add_option("--set", f.set, "Extra key=value config override (repeatable)");
}

}  // namespace

int run(int argc, const char* const* argv, Streams io) {
  CLI::App app{"Batch-norm-free and 1-bit-per-weight residual network toolkit", "bnfree"};
  app.set_version_flag("--version", std::string(BNFREE_VERSION));
  app.require_subcommand(1);

  ConfigFlags flags;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> opt_out;
  std::filesystem::path model_file;
  std::optional<std::filesystem::path> opt_model;
  std::filesystem::path matrix_file;
  uint64_t gc_seed = GradSuiteOptions{}.seed;
  std::string mutate;
  std::optional<int> classes;

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model; writes model.bnwm, metrics.txt, manifest.txt");
  add_config_flags(train_cmd, flags);
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model file on the configured dataset");
  add_config_flags(eval_cmd, flags);
  eval_cmd->add_option("--model", model_file, "Model file")->required();

  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable layer");
  gc_cmd->add_option("--seed", gc_seed, "Seed for the random inputs");
  gc_cmd->add_option("--mutate", mutate, "Corrupt one op's backward pass (harness self-test)");

  CLI::App* cost_cmd = app.add_subcommand("cost", "Float vs packed arithmetic cost table");
  add_config_flags(cost_cmd, flags);
  cost_cmd->add_option("--classes", classes, "Class count (default 10 CIFAR, 1000 ImageNet)");

  CLI::App* cmp_cmd = app.add_subcommand("compare", "Train every (variant, width, bits) cell of a matrix file");
  add_config_flags(cmp_cmd, flags);
  cmp_cmd->add_option("--matrix", matrix_file, "Matrix file")->required();
  cmp_cmd->add_option("--out", opt_out, "Directory for summary.txt");

  CLI::App* text_cmd = app.add_subcommand("export-text", "List a model's layer graph");
  add_config_flags(text_cmd, flags);
  text_cmd->add_option("--model", opt_model, "Model file (otherwise the configured architecture)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? int{kExitOk} : int{kExitUsage};
  }

  if (*train_cmd) return cmd_train(flags, out_dir, io);
  if (*eval_cmd) return cmd_eval(flags, model_file, io);
  if (*gc_cmd) return cmd_gradcheck(gc_seed, mutate, io);
  if (*cost_cmd) return cmd_cost(flags, classes, io);
  if (*cmp_cmd) return cmd_compare(flags, matrix_file, opt_out, io);
  if (*text_cmd) return cmd_export_text(flags, opt_model, io);
  return kExitUsage;
}

}  // namespace bnfree::cli
