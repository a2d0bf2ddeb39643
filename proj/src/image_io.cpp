#include "semlink/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace semlink {

namespace fs = std::filesystem;

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw std::invalid_argument("encode_png: inconsistent raster");
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ImageDecodeError(std::string("not a decodable PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  // Composite any alpha over white.
  png_color background{255, 255, 255};
  if (!png_image_finish_read(&image, &background, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageDecodeError(std::string("PNG decode failed: ") + image.message);
  }
  return out;
}

void write_png(const fs::path& path, const RgbImage& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

RgbImage read_png(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

RgbImage to_rgb(const ImageU8& img) {
  return RgbImage{kImageSide, kImageSide, std::vector<std::uint8_t>(img.pixels.begin(), img.pixels.end())};
}

ImageU8 to_image32(const RgbImage& img) {
  if (img.width != kImageSide || img.height != kImageSide) {
    throw std::invalid_argument("expected a 32x32 image, got " + std::to_string(img.width) + "x" +
                                std::to_string(img.height));
  }
  ImageU8 out;
  std::copy(img.pixels.begin(), img.pixels.end(), out.pixels.begin());
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, int width, int height) {
  if (width == img.width && height == img.height) return img;
  RgbImage out{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  auto at = [&img](int x, int y, int c) {
    return static_cast<double>(img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c]);
  };
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = at(x0, y0, c) * (1 - wx) + at(x1, y0, c) * wx;
        const double bot = at(x0, y1, c) * (1 - wx) + at(x1, y1, c) * wx;
        const double v = top * (1 - wy) + bot * wy;
        out.pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::pair<int, int> tile_friendly_size(int width, int height, int max_side) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("empty image");
  const double scale = std::min(1.0, static_cast<double>(max_side) / std::max(width, height));
  auto snap = [](double v) { return std::max(32, static_cast<int>(std::lround(v / 32.0)) * 32); };
  return {std::min(max_side, snap(width * scale)), std::min(max_side, snap(height * scale))};
}

std::vector<ImageU8> split_tiles(const RgbImage& img) {
  if (img.width % 32 != 0 || img.height % 32 != 0) throw std::invalid_argument("split_tiles: sides must be multiples of 32");
  std::vector<ImageU8> tiles;
  for (int ty = 0; ty < img.height / 32; ++ty)
    for (int tx = 0; tx < img.width / 32; ++tx) {
      ImageU8 t;
      for (int y = 0; y < 32; ++y)
        std::memcpy(t.pixels.data() + pixel_index(y, 0, 0),
                    img.pixels.data() + (static_cast<std::size_t>(ty * 32 + y) * img.width + tx * 32) * 3, 32 * 3);
      tiles.push_back(t);
    }
  return tiles;
}

RgbImage join_tiles(std::span<const ImageU8> tiles, int width, int height) {
  const int across = width / 32;
  if (width % 32 != 0 || height % 32 != 0 || tiles.size() != static_cast<std::size_t>(across * (height / 32))) {
    throw std::invalid_argument("join_tiles: tile count does not match the raster");
  }
  RgbImage out{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const int ty = static_cast<int>(i) / across, tx = static_cast<int>(i) % across;
    for (int y = 0; y < 32; ++y)
      std::memcpy(out.pixels.data() + (static_cast<std::size_t>(ty * 32 + y) * width + tx * 32) * 3,
                  tiles[i].pixels.data() + pixel_index(y, 0, 0), 32 * 3);
  }
  return out;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  // Accept data URLs ("data:image/png;base64,....").
  if (text.starts_with("data:")) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw std::invalid_argument("malformed data URL");
    text.remove_prefix(comma + 1);
  }
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64[i])] = i;
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (char ch : text) {
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    if (ch == '=') {
      ++pad;
      continue;
    }
    if (pad != 0) throw std::invalid_argument("base64: data after padding");
    const int v = lut[static_cast<unsigned char>(ch)];
    if (v < 0) throw std::invalid_argument("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  if (pad > 2) throw std::invalid_argument("base64: too much padding");
  return out;
}

}  // namespace semlink
