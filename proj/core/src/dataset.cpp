#include "bnfree/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "bnfree/error.hpp"
#include "bnfree/model_io.hpp"
#include "bnfree/rng.hpp"

namespace bnfree {
namespace {

constexpr int64_t kCifarSide = 32;
constexpr int64_t kCifarPlane = kCifarSide * kCifarSide;

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void append(Dataset& into, const Dataset& from) {
  into.pixels.insert(into.pixels.end(), from.pixels.begin(), from.pixels.end());
  into.labels.insert(into.labels.end(), from.labels.begin(), from.labels.end());
}

}  // namespace

std::span<const uint8_t> Dataset::image(int64_t i) const {
  if (i < 0 || i >= size()) throw ShapeError("image index out of range");
  return std::span<const uint8_t>(pixels).subspan(static_cast<size_t>(i * image_bytes()),
                                                  static_cast<size_t>(image_bytes()));
}

void Dataset::validate() const {
  if (height < 1 || width < 1) throw FormatError("dataset images must be non-empty");
  if (static_cast<int64_t>(pixels.size()) != size() * image_bytes()) {
    throw FormatError("dataset pixel buffer does not match its label count");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw FormatError("label " + std::to_string(y) + " out of range");
  }
}

Dataset parse_cifar(std::span<const uint8_t> bytes, CifarKind kind, Split split) {
  const int64_t rec = cifar_record_bytes(kind);
  const int64_t n = static_cast<int64_t>(bytes.size()) / rec;
  if (static_cast<int64_t>(bytes.size()) % rec != 0) {
    throw FormatError("CIFAR file size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                      std::to_string(rec) + "-byte record");
  }
  Dataset d;
  d.height = kCifarSide;
  d.width = kCifarSide;
  d.num_classes = kind == CifarKind::kCifar10 ? 10 : 100;
  d.split = split;
  d.labels.resize(static_cast<size_t>(n));
  d.pixels.resize(static_cast<size_t>(n * d.image_bytes()));
  const int64_t label_bytes = rec - 3 * kCifarPlane;
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t* r = bytes.data() + i * rec;
    const int label = r[label_bytes - 1];
    if (label >= d.num_classes) {
      throw FormatError("record " + std::to_string(i) + ": label " + std::to_string(label) + " out of range");
    }
    d.labels[static_cast<size_t>(i)] = label;
    const uint8_t* planes = r + label_bytes;
    uint8_t* dst = d.pixels.data() + i * d.image_bytes();
    for (int64_t p = 0; p < kCifarPlane; ++p) {
      for (int64_t c = 0; c < 3; ++c) dst[p * 3 + c] = planes[c * kCifarPlane + p];
    }
  }
  return d;
}

Dataset load_cifar(const std::filesystem::path& file, CifarKind kind, Split split) {
  Dataset d = parse_cifar(read_file(file), kind, split);
  if (split == Split::kTrain) compute_channel_statistics(d);
  return d;
}

DatasetSplits load_cifar_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory " + dir.string() + " not found");
  DatasetSplits s;
  if (fs::exists(dir / "test_batch.bin")) {
    s.train = Dataset{};
    s.train.num_classes = 10;
    bool any = false;
    for (int b = 1; b <= 5; ++b) {
      const fs::path f = dir / ("data_batch_" + std::to_string(b) + ".bin");
      if (!fs::exists(f)) continue;
      append(s.train, parse_cifar(read_file(f), CifarKind::kCifar10, Split::kTrain));
      any = true;
    }
    if (!any) throw std::runtime_error("no data_batch_*.bin files in " + dir.string());
    s.test = parse_cifar(read_file(dir / "test_batch.bin"), CifarKind::kCifar10, Split::kTest);
  } else if (fs::exists(dir / "train.bin") && fs::exists(dir / "test.bin")) {
    s.train = parse_cifar(read_file(dir / "train.bin"), CifarKind::kCifar100, Split::kTrain);
    s.test = parse_cifar(read_file(dir / "test.bin"), CifarKind::kCifar100, Split::kTest);
  } else {
    throw std::runtime_error("no CIFAR binary files found in " + dir.string());
  }
  s.train.split = Split::kTrain;
  compute_channel_statistics(s.train);
  s.test.mean = s.train.mean;
  s.test.stddev = s.train.stddev;
  return s;
}

std::vector<uint8_t> encode_cifar10(const Dataset& d) {
  if (d.height != kCifarSide || d.width != kCifarSide) throw ShapeError("CIFAR records are 32x32");
  std::vector<uint8_t> out;
  out.reserve(static_cast<size_t>(d.size() * cifar_record_bytes(CifarKind::kCifar10)));
  for (int64_t i = 0; i < d.size(); ++i) {
    const int label = d.labels[static_cast<size_t>(i)];
    if (label < 0 || label > 255) throw ShapeError("label does not fit in a byte");
    out.push_back(static_cast<uint8_t>(label));
    auto img = d.image(i);
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t p = 0; p < kCifarPlane; ++p) out.push_back(img[static_cast<size_t>(p * 3 + c)]);
    }
  }
  return out;
}

void compute_channel_statistics(Dataset& d) {
  std::array<double, 3> sum{}, sq{};
  const int64_t sites = static_cast<int64_t>(d.pixels.size()) / 3;
  if (sites == 0) throw FormatError("cannot compute statistics of an empty dataset");
  for (int64_t i = 0; i < sites; ++i) {
    for (int c = 0; c < 3; ++c) sum[c] += d.pixels[static_cast<size_t>(i * 3 + c)] / 255.0;
  }
  for (int c = 0; c < 3; ++c) d.mean[c] = sum[c] / static_cast<double>(sites);
  for (int64_t i = 0; i < sites; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = d.pixels[static_cast<size_t>(i * 3 + c)] / 255.0 - d.mean[c];
      sq[c] += v * v;
    }
  }
  for (int c = 0; c < 3; ++c) {
    d.stddev[c] = std::sqrt(sq[c] / static_cast<double>(sites));
    // A constant channel would divide by zero in standardisation.
    if (d.stddev[c] < 1e-6) d.stddev[c] = 1.0;
  }
}

Dataset make_synthetic_blobs(int64_t samples, int64_t image_size, uint64_t seed, Split split) {
  if (samples < 0 || image_size < 1) throw ShapeError("synthetic dataset needs a non-negative sample count and pixels");
  std::mt19937_64 pattern_rng = make_rng(seed, RngStream::kDataPattern);
  std::mt19937_64 noise_rng = make_rng(seed, split == Split::kTrain ? RngStream::kDataTrain : RngStream::kDataTest);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> offset(-30.0, 30.0);
  std::normal_distribution<double> noise(0.0, 40.0);

  constexpr int kClasses = 2;
  // Class c: vertical (c = 0) or horizontal (c = 1) stripes, random phase
  // and brightness per channel.
  std::vector<double> proto(static_cast<size_t>(kClasses * image_size * image_size * 3));
  for (int c = 0; c < kClasses; ++c) {
    for (int ch = 0; ch < 3; ++ch) {
      const double ph = phase(pattern_rng);
      const double base = 128.0 + offset(pattern_rng);
      for (int64_t h = 0; h < image_size; ++h) {
        for (int64_t w = 0; w < image_size; ++w) {
          const double t = static_cast<double>(c == 0 ? w : h) / static_cast<double>(image_size);
          proto[static_cast<size_t>(((c * image_size + h) * image_size + w) * 3 + ch)] =
              base + 60.0 * std::sin(2.0 * std::numbers::pi * t + ph);
        }
      }
    }
  }

  Dataset d;
  d.height = image_size;
  d.width = image_size;
  d.num_classes = kClasses;
  d.split = split;
  d.labels.resize(static_cast<size_t>(samples));
  d.pixels.resize(static_cast<size_t>(samples * d.image_bytes()));
  for (int64_t i = 0; i < samples; ++i) {
    const int label = static_cast<int>(i % kClasses);
    d.labels[static_cast<size_t>(i)] = label;
    const double* p = proto.data() + label * d.image_bytes();
    uint8_t* dst = d.pixels.data() + i * d.image_bytes();
    for (int64_t j = 0; j < d.image_bytes(); ++j) {
      dst[j] = static_cast<uint8_t>(std::clamp(std::lround(p[j] + noise(noise_rng)), 0L, 255L));
    }
  }
  if (samples > 0) compute_channel_statistics(d);
  return d;
}

DatasetSplits make_synthetic_splits(int64_t train_samples, int64_t test_samples, int64_t image_size,
                                    uint64_t seed) {
  DatasetSplits s{make_synthetic_blobs(train_samples, image_size, seed, Split::kTrain),
                  make_synthetic_blobs(test_samples, image_size, seed, Split::kTest)};
  s.test.mean = s.train.mean;
  s.test.stddev = s.train.stddev;
  return s;
}

uint32_t dataset_checksum(const Dataset& d) {
  std::vector<uint8_t> header;
  for (int64_t v : {d.height, d.width, static_cast<int64_t>(d.num_classes), d.size()}) {
    for (int i = 0; i < 8; ++i) header.push_back(static_cast<uint8_t>(static_cast<uint64_t>(v) >> (8 * i)));
  }
  for (int y : d.labels) header.push_back(static_cast<uint8_t>(y));
  header.insert(header.end(), d.pixels.begin(), d.pixels.end());
  return crc32(header);
}

Tensor to_tensor(const Dataset& d, std::span<const int64_t> indices) {
  Tensor t(Shape{static_cast<int64_t>(indices.size()), d.height, d.width, Dataset::kChannels});
  const int64_t n = d.image_bytes();
  for (size_t k = 0; k < indices.size(); ++k) {
    auto img = d.image(indices[k]);
    float* dst = t.ptr() + static_cast<int64_t>(k) * n;
    for (int64_t j = 0; j < n; ++j) dst[j] = static_cast<float>(img[static_cast<size_t>(j)]) / 255.0f;
  }
  return t;
}

}  // namespace bnfree
