#include <doctest.h>

#include "semlink/image_io.hpp"
#include "test_support.hpp"

using namespace semlink;

TEST_CASE("base64 against known vectors") {
  auto enc = [](std::string s) { return base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())); };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");
  const auto dec = base64_decode("Zm9vYmE=");
  CHECK(std::string(dec.begin(), dec.end()) == "fooba");
  const auto url = base64_decode("data:image/png;base64,Zm9v");
  CHECK(std::string(url.begin(), url.end()) == "foo");
  CHECK_THROWS(base64_decode("Zm9v!!"));
  std::vector<std::uint8_t> all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
  CHECK(base64_decode(base64_encode(all)) == all);
}

TEST_CASE("png encode/decode is lossless") {
  const RgbImage img = testing::synthetic_raster(70, 45, 3);
  const auto png = encode_png(img);
  CHECK(png.size() > 8);
  CHECK(png[1] == 'P');
  CHECK(decode_png(png) == img);
  testing::TempDir dir;
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == img);
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
  CHECK_THROWS_AS(decode_png(junk), ImageDecodeError);
}

TEST_CASE("tile-friendly sizing") {
  CHECK(tile_friendly_size(32, 32) == std::pair{32, 32});
  CHECK(tile_friendly_size(256, 256) == std::pair{256, 256});
  CHECK(tile_friendly_size(100, 50) == std::pair{96, 64});
  CHECK(tile_friendly_size(1024, 512) == std::pair{512, 256});
  CHECK(tile_friendly_size(10, 10) == std::pair{32, 32});
  const auto [w, h] = tile_friendly_size(4000, 3000);
  CHECK(w == 512);
  CHECK(h % 32 == 0);
  CHECK(h <= 512);
}

TEST_CASE("tiles split and rejoin exactly") {
  const RgbImage img = testing::synthetic_raster(96, 64, 1);
  const auto tiles = split_tiles(img);
  CHECK(tiles.size() == 6);
  // Tile 4 is row 1, column 1: pixel (0,0) of it is raster pixel (32,32).
  CHECK(tiles[4].pixels[pixel_index(0, 0, 2)] == img.pixels[(32 * 96 + 32) * 3 + 2]);
  CHECK(join_tiles(tiles, 96, 64) == img);
  CHECK(to_rgb(tiles[0]).width == 32);
  CHECK(to_image32(to_rgb(tiles[2])) .pixels == tiles[2].pixels);
}

TEST_CASE("bilinear resize") {
  const RgbImage img = testing::synthetic_raster(64, 64, 2);
  CHECK(resize_bilinear(img, 64, 64) == img);
  RgbImage flat{40, 30, std::vector<std::uint8_t>(40 * 30 * 3, 77)};
  const RgbImage r = resize_bilinear(flat, 96, 32);
  CHECK(r.width == 96);
  CHECK(r.height == 32);
  for (auto v : r.pixels) REQUIRE(v == 77);
}
