#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semlink {

inline constexpr int kImageSide = 32;
inline constexpr int kImageChannels = 3;
inline constexpr std::size_t kImageElems = kImageSide * kImageSide * kImageChannels;  // 3072
inline constexpr std::size_t kCifarRecordBytes = 1 + kImageElems;                        // 3073

// All in-memory images use interleaved HWC order:
//   index(y, x, c) = (y * 32 + x) * 3 + c
constexpr std::size_t pixel_index(int y, int x, int c) {
  return (static_cast<std::size_t>(y) * kImageSide + static_cast<std::size_t>(x)) * kImageChannels +
         static_cast<std::size_t>(c);
}

struct ImageU8 {
  std::array<std::uint8_t, kImageElems> pixels{};
  std::optional<std::uint8_t> label;

  bool operator==(const ImageU8&) const = default;
};

struct ImageF {
  std::array<float, kImageElems> pixels{};
};

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<ImageU8> train;
  std::vector<ImageU8> test;

  const std::vector<ImageU8>& split(Split s) const { return s == Split::kTrain ? train : test; }
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads one CIFAR-10 binary batch (records of 1 label byte + planar R,G,B).
std::vector<ImageU8> read_cifar_batch(const std::filesystem::path& file);

// Writes images back in the CIFAR-10 record layout. Images without a label
// are written with label 0.
void write_cifar_batch(const std::filesystem::path& file, std::span<const ImageU8> images);

// Loads data_batch_1..5.bin as the train split and test_batch.bin as the test
// split, preserving record order.
Dataset load_cifar10(const std::filesystem::path& dir);

ImageF to_float(const ImageU8& img);
ImageU8 to_bytes(const ImageF& img);
std::uint8_t float_to_byte(float v);

// n distinct images drawn without replacement; a pure function of
// (split contents, n, seed).
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);
std::vector<ImageU8> sample_images(const Dataset& ds, Split split, std::size_t n, std::uint64_t seed);

// Deterministic prefix subset used by reduced training profiles.
Dataset take_subset(const Dataset& ds, std::size_t max_train, std::size_t max_test);

}  // namespace semlink
