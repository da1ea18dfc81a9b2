#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace bnfree {

struct AugmentConfig {
  bool crop = true;
  int pad = 4;
  bool flip = true;
  bool cutout = true;
  int cutout_size = 18;
};

/// Zero-pads an HWC image by `pad` on every side and takes the
/// height x width window at offset (oy, ox) of the padded image.
std::vector<uint8_t> pad_crop(std::span<const uint8_t> image, int64_t height, int64_t width, int pad, int oy,
                              int ox);

void flip_horizontal(std::span<uint8_t> image, int64_t height, int64_t width);

/// Zeroes rows [cy - size/2, cy - size/2 + size) x the same columns,
/// clipped to the image. Returns the number of pixels zeroed.
int64_t cutout_at(std::span<uint8_t> image, int64_t height, int64_t width, int64_t cy, int64_t cx, int size);

/// Cutout with the centre drawn uniformly over the image. size >= 1.
int64_t cutout(std::span<uint8_t> image, int64_t height, int64_t width, int size, std::mt19937_64& rng);

/// Crop (offsets uniform in [0, 2*pad]), flip with probability 1/2, then
/// cutout, each as enabled in `cfg`.
std::vector<uint8_t> augment(std::span<const uint8_t> image, int64_t height, int64_t width, std::mt19937_64& rng,
                             const AugmentConfig& cfg);

}  // namespace bnfree
