#include <gtest/gtest.h>

#include "bnfree/config.hpp"
#include "bnfree/error.hpp"

namespace bnfree {
namespace {

TEST(ConfigText, RoundTrip) {
  TrainConfig cfg;
  cfg.variant = ModelVariant::kELUOnly;
  cfg.quantized = true;
  cfg.width = 2.5;
  cfg.lr_end = 3e-6;
  cfg.seed = 123456789012345ull;
  cfg.augment.cutout = false;
  cfg.dataset = "/data/cifar-10";
  const std::string text = config_to_text(cfg);
  TrainConfig back = parse_config(text);
  EXPECT_EQ(config_to_text(back), text);
  EXPECT_EQ(back.width, 2.5);
  EXPECT_EQ(back.lr_end, 3e-6);
  EXPECT_EQ(back.dataset, "/data/cifar-10");
}

TEST(ConfigText, TemperatureDefaultRecorded) {
  TrainConfig cfg = parse_config("variant=sreluonly\n");
  EXPECT_FALSE(cfg.temperature.has_value());
  EXPECT_NE(config_to_text(cfg).find("temperature=50\n"), std::string::npos);
}

TEST(ConfigText, CommentsBlanksAndBits) {
  TrainConfig cfg = parse_config("# comment\n\n  bits = 1 \nwidth=4\nvariant=baseline1\n");
  EXPECT_TRUE(cfg.quantized);
  EXPECT_EQ(cfg.width, 4.0);
  EXPECT_EQ(cfg.variant, ModelVariant::kBaseline1);
}

TEST(ConfigText, UnknownKeyNamesLine) {
  try {
    parse_config("epochs=3\nlearning_rate=0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos);
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
  }
}

TEST(ConfigText, UnknownVariantListsAll) {
  try {
    parse_config("variant=groupnorm\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (ModelVariant v : kAllVariants) EXPECT_NE(msg.find(variant_name(v)), std::string::npos);
  }
}

TEST(ConfigText, BadValues) {
  EXPECT_THROW(parse_config("epochs=ten\n"), ConfigError);
  EXPECT_THROW(parse_config("bits=8\n"), ConfigError);
  EXPECT_THROW(parse_config("quantized=maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
  EXPECT_THROW(parse_config("family=mnist\n"), ConfigError);
}

}  // namespace
}  // namespace bnfree
