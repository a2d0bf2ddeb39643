#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "semlink/dataset.hpp"

namespace semlink {

// Arbitrary-size 8-bit RGB raster, interleaved, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const RgbImage&) const = default;
};

class ImageDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// PNG via libpng; alpha is composited away, grey is expanded to RGB.
std::vector<std::uint8_t> encode_png(const RgbImage& img);
RgbImage decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png(const std::filesystem::path& path);

RgbImage to_rgb(const ImageU8& img);
// Requires a 32x32 raster.
ImageU8 to_image32(const RgbImage& img);

// Bilinear resampling (pixel-centre aligned).
RgbImage resize_bilinear(const RgbImage& img, int width, int height);

// Target size for tiling: scale down to fit max_side, then snap each side to
// a multiple of 32 (at least 32).
std::pair<int, int> tile_friendly_size(int width, int height, int max_side = 512);

// Splits a raster whose sides are multiples of 32 into row-major tiles.
std::vector<ImageU8> split_tiles(const RgbImage& img);
RgbImage join_tiles(std::span<const ImageU8> tiles, int width, int height);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace semlink
