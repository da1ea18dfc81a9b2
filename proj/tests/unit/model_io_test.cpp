#include <gtest/gtest.h>

#include <filesystem>

#include "bnfree/dataset.hpp"
#include "bnfree/error.hpp"
#include "bnfree/model_io.hpp"
#include "bnfree/train.hpp"

namespace bnfree {
namespace {

Model sample_model(ModelVariant v, bool quantized) {
  Dataset d = make_synthetic_blobs(16, 8, 1, Split::kTrain);
  TrainConfig cfg;
  cfg.variant = v;
  cfg.quantized = quantized;
  cfg.depth = 8;
  cfg.width = 1;
  Model m = make_model(cfg, d);
  if (m.has_batch_statistics()) finalize_bn_statistics(m, d, 8);
  return m;
}

void fix_crc(std::vector<uint8_t>& bytes) {
  const uint32_t crc = crc32(std::span(bytes).first(bytes.size() - 4));
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<uint8_t>(crc >> (8 * i));
}

TEST(ModelIO, FloatRoundTripIsExact) {
  for (ModelVariant v : kAllVariants) {
    Model m = sample_model(v, false);
    EXPECT_TRUE(deserialize_model(serialize_model(m)) == m) << variant_name(v);
  }
}

TEST(ModelIO, QuantizedRoundTripKeepsPackedBits) {
  for (ModelVariant v : kAllVariants) {
    Model m = sample_model(v, true);
    auto bytes = serialize_model(m);
    Model back = deserialize_model(bytes);
    EXPECT_EQ(serialize_model(back), bytes);
    for (size_t i = 0; i < m.graph().layers.size(); ++i) {
      if (m.graph().layers[i].kind != LayerKind::kConv) continue;
      const LayerState& a = m.state(static_cast<int>(i));
      const LayerState& b = back.state(static_cast<int>(i));
      EXPECT_EQ(pack_weights(a.weights, a.sigma0), pack_weights(b.weights, b.sigma0));
    }
  }
}

TEST(ModelIO, StartsWithMagicAndVersion) {
  auto bytes = serialize_model(sample_model(ModelVariant::kBaseline1, true));
  EXPECT_EQ(bytes[0], 'B');
  EXPECT_EQ(bytes[3], 'M');
  EXPECT_EQ(bytes[4], kModelFormatVersion);
}

TEST(ModelIO, BadMagic) {
  auto bytes = serialize_model(sample_model(ModelVariant::kBaseline1, true));
  bytes[0] = 'X';
  fix_crc(bytes);
  try {
    deserialize_model(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(ModelIO, VersionMismatch) {
  auto bytes = serialize_model(sample_model(ModelVariant::kBaseline1, true));
  bytes[4] = 9;
  fix_crc(bytes);
  EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(ModelIO, CorruptedPayloadFailsCrc) {
  auto bytes = serialize_model(sample_model(ModelVariant::kSReLUOnly, true));
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(ModelIO, TruncatedFile) {
  auto bytes = serialize_model(sample_model(ModelVariant::kSReLUOnly, true));
  for (size_t keep : {size_t{2}, size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    EXPECT_THROW(deserialize_model(cut), FormatError) << keep;
  }
}

TEST(ModelIO, UnfinalizedExportRejected) {
  Dataset d = make_synthetic_blobs(16, 8, 1, Split::kTrain);
  TrainConfig cfg;
  cfg.depth = 8;
  cfg.width = 1;
  EXPECT_THROW(serialize_model(make_model(cfg, d)), StateError);
}

TEST(ModelIO, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "bnfree_model_io_test.bnwm";
  Model m = sample_model(ModelVariant::kMeanOnlyFinal, true);
  export_model(m, path);
  EXPECT_EQ(serialize_model(import_model(path)), serialize_model(m));
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(import_model(path));
}

TEST(Crc32, KnownVector) {
  const std::string s = "123456789";
  std::vector<uint8_t> b(s.begin(), s.end());
  EXPECT_EQ(crc32(b), 0xCBF43926u);
}

}  // namespace
}  // namespace bnfree
