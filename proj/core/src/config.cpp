#include "bnfree/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bnfree/error.hpp"

namespace bnfree {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

const char* fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string_view family_name(Family f) { return f == Family::kCifar ? "cifar" : "imagenet"; }

void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value) {
  const std::string_view v = trim(value);
  if (key == "batch_size") {
    cfg.batch_size = parse_number<int>(key, v);
  } else if (key == "momentum") {
    cfg.momentum = parse_number<double>(key, v);
  } else if (key == "weight_decay") {
    cfg.weight_decay = parse_number<double>(key, v);
  } else if (key == "lr_start") {
    cfg.lr_start = parse_number<double>(key, v);
  } else if (key == "lr_end") {
    cfg.lr_end = parse_number<double>(key, v);
  } else if (key == "epochs") {
    cfg.epochs = parse_number<int>(key, v);
  } else if (key == "variant") {
    const auto parsed = parse_variant(v);
    if (!parsed) throw ConfigError("unknown variant '" + std::string(v) + "'; expected one of " + variant_list());
    cfg.variant = *parsed;
  } else if (key == "temperature") {
    cfg.temperature = parse_number<double>(key, v);
  } else if (key == "quantized") {
    cfg.quantized = parse_bool(key, v);
  } else if (key == "bits") {
    const int bits = parse_number<int>(key, v);
    if (bits != 1 && bits != 32) throw ConfigError("bits must be 1 or 32");
    cfg.quantized = bits == 1;
  } else if (key == "family") {
    if (v == "cifar") {
      cfg.family = Family::kCifar;
    } else if (v == "imagenet") {
      cfg.family = Family::kImageNet;
    } else {
      throw ConfigError("family must be 'cifar' or 'imagenet'");
    }
  } else if (key == "depth") {
    cfg.depth = parse_number<int>(key, v);
  } else if (key == "width") {
    cfg.width = parse_number<double>(key, v);
  } else if (key == "seed") {
    cfg.seed = parse_number<uint64_t>(key, v);
  } else if (key == "augment_crop") {
    cfg.augment.crop = parse_bool(key, v);
  } else if (key == "augment_pad") {
    cfg.augment.pad = parse_number<int>(key, v);
  } else if (key == "augment_flip") {
    cfg.augment.flip = parse_bool(key, v);
  } else if (key == "augment_cutout") {
    cfg.augment.cutout = parse_bool(key, v);
  } else if (key == "cutout_size") {
    cfg.augment.cutout_size = parse_number<int>(key, v);
  } else if (key == "eval_each_epoch") {
    cfg.eval_each_epoch = parse_bool(key, v);
  } else if (key == "threads") {
    cfg.threads = parse_number<int>(key, v);
  } else if (key == "dataset") {
    cfg.dataset = std::string(v);
  } else if (key == "synthetic_train") {
    cfg.synthetic_train = parse_number<int64_t>(key, v);
  } else if (key == "synthetic_test") {
    cfg.synthetic_test = parse_number<int64_t>(key, v);
  } else if (key == "synthetic_size") {
    cfg.synthetic_size = parse_number<int64_t>(key, v);
  } else if (key == "synthetic_seed") {
    cfg.synthetic_seed = parse_number<uint64_t>(key, v);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_text(const TrainConfig& cfg) {
  std::ostringstream o;
  o << "batch_size=" << cfg.batch_size << '\n'
    << "momentum=" << fmt_double(cfg.momentum) << '\n'
    << "weight_decay=" << fmt_double(cfg.weight_decay) << '\n'
    << "lr_start=" << fmt_double(cfg.lr_start) << '\n'
    << "lr_end=" << fmt_double(cfg.lr_end) << '\n'
    << "epochs=" << cfg.epochs << '\n'
    << "variant=" << variant_name(cfg.variant) << '\n'
    << "temperature=" << fmt_double(cfg.resolved_temperature()) << '\n'
    << "quantized=" << fmt_bool(cfg.quantized) << '\n'
    << "family=" << family_name(cfg.family) << '\n'
    << "depth=" << cfg.depth << '\n'
    << "width=" << fmt_double(cfg.width) << '\n'
    << "seed=" << cfg.seed << '\n'
    << "augment_crop=" << fmt_bool(cfg.augment.crop) << '\n'
    << "augment_pad=" << cfg.augment.pad << '\n'
    << "augment_flip=" << fmt_bool(cfg.augment.flip) << '\n'
    << "augment_cutout=" << fmt_bool(cfg.augment.cutout) << '\n'
    << "cutout_size=" << cfg.augment.cutout_size << '\n'
    << "eval_each_epoch=" << fmt_bool(cfg.eval_each_epoch) << '\n'
    << "threads=" << cfg.threads << '\n'
    << "dataset=" << cfg.dataset << '\n'
    << "synthetic_train=" << cfg.synthetic_train << '\n'
    << "synthetic_test=" << cfg.synthetic_test << '\n'
    << "synthetic_size=" << cfg.synthetic_size << '\n'
    << "synthetic_seed=" << cfg.synthetic_seed << '\n';
  return o.str();
}

}  // namespace bnfree
