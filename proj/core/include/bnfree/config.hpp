#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "bnfree/train.hpp"

namespace bnfree {

/// Sets one field from its text form. Keys match the config file.
/// ConfigError on an unknown key or malformed value; unknown variant names
/// list the accepted ones.
void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Flat `key = value` lines applied over `base`. Blank lines and lines
/// starting with '#' are skipped.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Every field as `key=value` lines in a fixed order, with the temperature
/// resolved. parse_config(config_to_text(c)) rebuilds an equivalent config.
std::string config_to_text(const TrainConfig& cfg);

std::string_view family_name(Family f);

}  // namespace bnfree
