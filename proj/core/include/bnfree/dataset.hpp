#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bnfree/tensor.hpp"

namespace bnfree {

enum class Split { kTrain, kTest };

/// Labelled 8-bit RGB images stored HWC, one after another.
struct Dataset {
  static constexpr int64_t kChannels = 3;

  int64_t height = 32;
  int64_t width = 32;
  std::vector<uint8_t> pixels;
  std::vector<int> labels;
  int num_classes = 10;
  // Per-channel mean / std of pixel / 255, from the train split.
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
  Split split = Split::kTrain;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t image_bytes() const { return height * width * kChannels; }
  std::span<const uint8_t> image(int64_t i) const;
  /// Throws FormatError on inconsistent sizes or out-of-range labels.
  void validate() const;
};

enum class CifarKind { kCifar10, kCifar100 };

/// Bytes per record: label byte(s) then 3072 pixel bytes as R, G, B planes.
constexpr int64_t cifar_record_bytes(CifarKind kind) { return (kind == CifarKind::kCifar10 ? 1 : 2) + 3072; }

/// Parses concatenated CIFAR binary records. CIFAR-100 records carry a
/// coarse then a fine label; the fine label is used. Pixel planes are
/// converted to HWC. Statistics are not computed here.
Dataset parse_cifar(std::span<const uint8_t> bytes, CifarKind kind, Split split);

/// Reads one CIFAR binary file; statistics are computed when split is train.
Dataset load_cifar(const std::filesystem::path& file, CifarKind kind, Split split);

struct DatasetSplits {
  Dataset train;
  Dataset test;
};

/// Reads a CIFAR directory: data_batch_{1..5}.bin + test_batch.bin (CIFAR-10)
/// or train.bin + test.bin (CIFAR-100). Test statistics copy the train ones.
DatasetSplits load_cifar_dir(const std::filesystem::path& dir);

/// CIFAR-10 record encoding of a 32x32 dataset (label < 256).
std::vector<uint8_t> encode_cifar10(const Dataset& d);

/// Sets mean/stddev from this dataset's pixels.
void compute_channel_statistics(Dataset& d);

/// Two-class images: each class is a fixed smooth colour pattern plus
/// per-pixel Gaussian noise. Labels alternate 0, 1, 0, ...
Dataset make_synthetic_blobs(int64_t samples, int64_t image_size, uint64_t seed, Split split);

/// Train/test pair sharing class patterns; test stats copy the train ones.
DatasetSplits make_synthetic_splits(int64_t train_samples, int64_t test_samples, int64_t image_size,
                                    uint64_t seed);

/// CRC-32 over dimensions, labels and pixels.
uint32_t dataset_checksum(const Dataset& d);

/// Images at `indices` as a (N, H, W, 3) tensor of pixel / 255.
Tensor to_tensor(const Dataset& d, std::span<const int64_t> indices);

}  // namespace bnfree
