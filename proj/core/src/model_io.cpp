#include "bnfree/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "bnfree/error.hpp"

namespace bnfree {
namespace {

class Writer {
 public:
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void raw(std::span<const uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  std::vector<uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : b_(b) {}
  uint8_t u8() { return take(1)[0]; }
  uint32_t u32() {
    auto s = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(s[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    auto s = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(s[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const uint8_t> take(uint64_t n) {
    if (n > b_.size() - pos_) throw FormatError("truncated file");
    auto s = b_.subspan(pos_, static_cast<size_t>(n));
    pos_ += static_cast<size_t>(n);
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const uint8_t> b_;
  size_t pos_ = 0;
};

uint32_t to_u32(int64_t v) {
  if (v < 0 || v > static_cast<int64_t>(UINT32_MAX)) throw ShapeError("extent does not fit in u32");
  return static_cast<uint32_t>(v);
}

void write_floats(Writer& w, const std::vector<float>& v) {
  for (float f : v) w.f32(f);
}

std::vector<float> read_floats(Reader& r, int64_t n) {
  std::vector<float> v(static_cast<size_t>(n));
  for (float& f : v) f = r.f32();
  return v;
}

void write_bn(Writer& payload, const BNParams& bn) {
  write_floats(payload, bn.mean);
  write_floats(payload, bn.var);
  write_floats(payload, bn.gain);
  write_floats(payload, bn.shift);
  payload.f64(bn.epsilon);
}

void read_bn(Reader& r, BNParams& bn) {
  const int64_t c = bn.channels();
  bn.mean = read_floats(r, c);
  bn.var = read_floats(r, c);
  bn.gain = read_floats(r, c);
  bn.shift = read_floats(r, c);
  bn.epsilon = r.f64();
  bn.finalized = true;
  bn.validate();
}

}  // namespace

uint32_t crc32(std::span<const uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed in bounded pieces.
  size_t off = 0;
  while (off < bytes.size()) {
    const size_t n = std::min<size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<uint32_t>(crc);
}

std::vector<uint8_t> serialize_model(const Model& model) {
  if (!model.statistics_finalized()) throw StateError("export requires finalized BN statistics");
  const ModelGraph& g = model.graph();
  Writer w;
  for (char c : kModelMagic) w.u8(static_cast<uint8_t>(c));
  w.u32(kModelFormatVersion);
  w.u32(static_cast<uint32_t>(g.variant));
  w.u32(to_u32(static_cast<int64_t>(g.layers.size()) + 1));

  // Architecture record.
  w.u32(kArchitectureRecord);
  w.u32(static_cast<uint32_t>(g.spec.family));
  w.u32(to_u32(g.spec.depth));
  w.u32(to_u32(g.spec.num_classes));
  w.u32(0);
  w.u8(0);
  w.u64(17);
  w.f64(g.spec.width);
  w.f64(g.temperature);
  w.u8(g.spec.quantized ? 1 : 0);

  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    const LayerState& s = model.state(static_cast<int>(i));
    const bool quantized = l.kind == LayerKind::kConv && l.quantized;
    w.u32(static_cast<uint32_t>(l.kind));
    w.u32(to_u32(l.shape.k));
    w.u32(to_u32(l.shape.h));
    w.u32(to_u32(l.shape.w));
    w.u32(to_u32(l.shape.c));
    w.u8(quantized ? 1 : 0);
    if (quantized) w.f64(s.sigma0);

    Writer payload;
    switch (l.kind) {
      case LayerKind::kConv:
        if (quantized) {
          payload.raw(pack_weights(s.weights, s.sigma0).bits());
        } else {
          for (float f : s.weights.data()) payload.f32(f);
        }
        break;
      case LayerKind::kBatchNorm:
      case LayerKind::kMeanOnlyBN:
        write_bn(payload, s.bn);
        break;
      case LayerKind::kStandardize:
        write_floats(payload, s.mean);
        write_floats(payload, s.stddev);
        break;
      default:
        break;
    }
    w.u64(payload.bytes().size());
    w.raw(payload.bytes());
  }
  const uint32_t crc = crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

Model deserialize_model(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4) throw FormatError("truncated file");
  for (char c : kModelMagic) {
    if (r.u8() != static_cast<uint8_t>(c)) throw FormatError("bad magic");
  }
  const uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("version mismatch: file has " + std::to_string(version) + ", reader supports " +
                      std::to_string(kModelFormatVersion));
  }
  const uint32_t variant_tag = r.u32();
  const uint32_t records = r.u32();
  const std::optional<ModelVariant> variant = [&]() -> std::optional<ModelVariant> {
    for (ModelVariant v : kAllVariants) {
      if (static_cast<uint32_t>(v) == variant_tag) return v;
    }
    return std::nullopt;
  }();
  if (!variant) throw FormatError("unknown variant tag " + std::to_string(variant_tag));

  if (r.u32() != kArchitectureRecord) throw FormatError("first record must describe the architecture");
  ArchitectureSpec spec;
  const uint32_t family = r.u32();
  if (family != static_cast<uint32_t>(Family::kCifar) && family != static_cast<uint32_t>(Family::kImageNet)) {
    throw FormatError("unknown family tag");
  }
  spec.family = static_cast<Family>(family);
  spec.depth = static_cast<int>(r.u32());
  spec.num_classes = static_cast<int>(r.u32());
  r.u32();
  r.u8();
  if (r.u64() != 17) throw FormatError("architecture record has the wrong payload length");
  spec.width = r.f64();
  const double temperature = r.f64();
  spec.quantized = r.u8() != 0;

  Model model = [&] {
    try {
      return Model(build_model(spec, *variant, temperature));
    } catch (const ShapeError& e) {
      throw FormatError(std::string("invalid architecture: ") + e.what());
    }
  }();
  const ModelGraph& g = model.graph();
  if (records != g.layers.size() + 1) throw FormatError("record count does not match the architecture");

  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    LayerState& s = model.state(static_cast<int>(i));
    const uint32_t kind = r.u32();
    Shape shape;
    shape.k = r.u32();
    shape.h = r.u32();
    shape.w = r.u32();
    shape.c = r.u32();
    if (kind != static_cast<uint32_t>(l.kind) || shape != l.shape) {
      throw FormatError("layer " + std::to_string(i) + " does not match the architecture");
    }
    const bool quantized = r.u8() != 0;
    if (quantized != (l.kind == LayerKind::kConv && l.quantized)) {
      throw FormatError("layer " + std::to_string(i) + " has the wrong quantization flag");
    }
    double sigma0 = 0.0;
    if (quantized) sigma0 = r.f64();
    const uint64_t len = r.u64();
    Reader payload(r.take(len));
    try {
      switch (l.kind) {
        case LayerKind::kConv:
          if (quantized) {
            auto bits = payload.take(static_cast<uint64_t>(packed_bytes(l.shape.size())));
            PackedConvWeights pw(l.shape, std::vector<uint8_t>(bits.begin(), bits.end()), sigma0);
            s.weights = pw.unpack();
            s.sigma0 = sigma0;
          } else {
            s.weights = Tensor(l.shape, read_floats(payload, l.shape.size()));
          }
          break;
        case LayerKind::kBatchNorm:
        case LayerKind::kMeanOnlyBN:
          read_bn(payload, s.bn);
          break;
        case LayerKind::kStandardize:
          s.mean = read_floats(payload, l.channels());
          s.stddev = read_floats(payload, l.channels());
          break;
        default:
          break;
      }
    } catch (const ShapeError& e) {
      throw FormatError("layer " + std::to_string(i) + ": " + e.what());
    } catch (const StateError& e) {
      throw FormatError("layer " + std::to_string(i) + ": " + e.what());
    }
    if (payload.remaining() != 0) throw FormatError("layer " + std::to_string(i) + " payload has trailing bytes");
  }
  const size_t body = r.pos();
  const uint32_t stored = r.u32();
  if (r.remaining() != 0) throw FormatError("trailing bytes after checksum");
  if (stored != crc32(bytes.first(body))) throw FormatError("checksum failure");
  return model;
}

void export_model(const Model& model, const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Model import_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace bnfree
