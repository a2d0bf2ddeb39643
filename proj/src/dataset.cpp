#include "semlink/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "semlink/rng.hpp"

namespace semlink {

namespace fs = std::filesystem;

std::vector<ImageU8> read_cifar_batch(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open CIFAR-10 batch: " + file.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 batch " + file.string() + " has " + std::to_string(raw.size()) +
                      " bytes, not a multiple of the 3073-byte record");
  }
  const std::size_t count = raw.size() / kCifarRecordBytes;
  std::vector<ImageU8> images(count);
  constexpr std::size_t plane = kImageSide * kImageSide;
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* rec = raw.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("CIFAR-10 batch " + file.string() + " record " + std::to_string(r) +
                        " has label " + std::to_string(rec[0]));
    }
    ImageU8& img = images[r];
    img.label = rec[0];
    for (int c = 0; c < kImageChannels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        img.pixels[p * kImageChannels + c] = rec[1 + c * plane + p];
      }
    }
  }
  return images;
}

void write_cifar_batch(const fs::path& file, std::span<const ImageU8> images) {
  std::vector<std::uint8_t> raw(images.size() * kCifarRecordBytes);
  constexpr std::size_t plane = kImageSide * kImageSide;
  for (std::size_t r = 0; r < images.size(); ++r) {
    std::uint8_t* rec = raw.data() + r * kCifarRecordBytes;
    rec[0] = images[r].label.value_or(0);
    for (int c = 0; c < kImageChannels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        rec[1 + c * plane + p] = images[r].pixels[p * kImageChannels + c];
      }
    }
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("short write to " + file.string());
}

Dataset load_cifar10(const fs::path& dir) {
  Dataset ds;
  for (int i = 1; i <= 5; ++i) {
    const fs::path f = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (!fs::exists(f)) throw FormatError("missing CIFAR-10 file: " + f.string());
    auto part = read_cifar_batch(f);
    ds.train.insert(ds.train.end(), part.begin(), part.end());
  }
  const fs::path t = dir / "test_batch.bin";
  if (!fs::exists(t)) throw FormatError("missing CIFAR-10 file: " + t.string());
  ds.test = read_cifar_batch(t);
  return ds;
}

ImageF to_float(const ImageU8& img) {
  ImageF out;
  for (std::size_t i = 0; i < kImageElems; ++i) out.pixels[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  return out;
}

std::uint8_t float_to_byte(float v) {
  if (!(v > 0.0f)) return 0;  // also maps NaN to 0
  if (v >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::lround(static_cast<double>(v) * 255.0));
}

ImageU8 to_bytes(const ImageF& img) {
  ImageU8 out;
  for (std::size_t i = 0; i < kImageElems; ++i) out.pixels[i] = float_to_byte(img.pixels[i]);
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  if (n > population) {
    throw std::invalid_argument("cannot sample " + std::to_string(n) + " images from a split of " +
                                std::to_string(population));
  }
  // Partial Fisher-Yates over the identity permutation.
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

std::vector<ImageU8> sample_images(const Dataset& ds, Split split, std::size_t n, std::uint64_t seed) {
  const auto& pool = ds.split(split);
  std::vector<ImageU8> out;
  out.reserve(n);
  for (std::size_t i : sample_indices(pool.size(), n, seed)) out.push_back(pool[i]);
  return out;
}

Dataset take_subset(const Dataset& ds, std::size_t max_train, std::size_t max_test) {
  Dataset out;
  out.train.assign(ds.train.begin(), ds.train.begin() + static_cast<std::ptrdiff_t>(std::min(max_train, ds.train.size())));
  out.test.assign(ds.test.begin(), ds.test.begin() + static_cast<std::ptrdiff_t>(std::min(max_test, ds.test.size())));
  return out;
}

}  // namespace semlink
