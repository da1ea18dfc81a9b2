#include "bnfree/augment.hpp"

#include <algorithm>

#include "bnfree/error.hpp"

namespace bnfree {
namespace {

constexpr int64_t kChannels = 3;

void check_image(std::span<const uint8_t> image, int64_t height, int64_t width) {
  if (height < 1 || width < 1 || static_cast<int64_t>(image.size()) != height * width * kChannels) {
    throw ShapeError("image buffer does not match its dimensions");
  }
}

}  // namespace

std::vector<uint8_t> pad_crop(std::span<const uint8_t> image, int64_t height, int64_t width, int pad, int oy,
                              int ox) {
  check_image(image, height, width);
  if (pad < 0 || oy < 0 || ox < 0 || oy > 2 * pad || ox > 2 * pad) throw ShapeError("crop offset out of range");
  std::vector<uint8_t> out(image.size(), 0);
  for (int64_t y = 0; y < height; ++y) {
    const int64_t sy = y + oy - pad;
    if (sy < 0 || sy >= height) continue;
    for (int64_t x = 0; x < width; ++x) {
      const int64_t sx = x + ox - pad;
      if (sx < 0 || sx >= width) continue;
      std::copy_n(image.data() + (sy * width + sx) * kChannels, kChannels, out.data() + (y * width + x) * kChannels);
    }
  }
  return out;
}

void flip_horizontal(std::span<uint8_t> image, int64_t height, int64_t width) {
  check_image(image, height, width);
  for (int64_t y = 0; y < height; ++y) {
    uint8_t* row = image.data() + y * width * kChannels;
    for (int64_t x = 0; x < width / 2; ++x) {
      std::swap_ranges(row + x * kChannels, row + (x + 1) * kChannels, row + (width - 1 - x) * kChannels);
    }
  }
}

int64_t cutout_at(std::span<uint8_t> image, int64_t height, int64_t width, int64_t cy, int64_t cx, int size) {
  check_image(image, height, width);
  if (size < 1) throw ShapeError("cutout size must be at least 1");
  const int64_t y0 = std::max<int64_t>(0, cy - size / 2);
  const int64_t y1 = std::min<int64_t>(height, cy - size / 2 + size);
  const int64_t x0 = std::max<int64_t>(0, cx - size / 2);
  const int64_t x1 = std::min<int64_t>(width, cx - size / 2 + size);
  int64_t zeroed = 0;
  for (int64_t y = y0; y < y1; ++y) {
    for (int64_t x = x0; x < x1; ++x) {
      std::fill_n(image.data() + (y * width + x) * kChannels, kChannels, uint8_t{0});
      ++zeroed;
    }
  }
  return zeroed;
}

int64_t cutout(std::span<uint8_t> image, int64_t height, int64_t width, int size, std::mt19937_64& rng) {
  if (size < 1) throw ShapeError("cutout size must be at least 1");
  std::uniform_int_distribution<int64_t> ry(0, height - 1);
  std::uniform_int_distribution<int64_t> rx(0, width - 1);
  const int64_t cy = ry(rng);
  const int64_t cx = rx(rng);
  return cutout_at(image, height, width, cy, cx, size);
}

std::vector<uint8_t> augment(std::span<const uint8_t> image, int64_t height, int64_t width, std::mt19937_64& rng,
                             const AugmentConfig& cfg) {
  check_image(image, height, width);
  std::vector<uint8_t> out;
  if (cfg.crop) {
    std::uniform_int_distribution<int> off(0, 2 * cfg.pad);
    const int oy = off(rng);
    const int ox = off(rng);
    out = pad_crop(image, height, width, cfg.pad, oy, ox);
  } else {
    out.assign(image.begin(), image.end());
  }
  if (cfg.flip && std::bernoulli_distribution(0.5)(rng)) flip_horizontal(out, height, width);
  if (cfg.cutout) cutout(out, height, width, cfg.cutout_size, rng);
  return out;
}

}  // namespace bnfree
