#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "semlink/dataset.hpp"
#include "semlink/rng.hpp"
#include "test_support.hpp"

using namespace semlink;

TEST_CASE("xoshiro256** matches the reference recurrence") {
  // Reference outputs for state {1, 2, 3, 4}, from the published C code.
  Rng rng;
  rng.restore({1, 2, 3, 4}, false, 0.0);
  const std::uint64_t expected[] = {11520ULL, 0ULL, 1509978240ULL, 1215971899390074240ULL};
  for (std::uint64_t e : expected) CHECK(rng.next_u64() == e);
}

TEST_CASE("rng streams are reproducible and seeds separate") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
  CHECK(derive_seed(5, {}) == derive_seed(5, {}));
}

TEST_CASE("gaussian moments and uniform range") {
  Rng rng(9);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.015);
}

TEST_CASE("rng state restore resumes the exact stream, spare included") {
  Rng a(3);
  a.gaussian();  // leaves a spare
  Rng b;
  b.restore(a.state(), a.has_spare(), a.spare());
  for (int i = 0; i < 10; ++i) CHECK(a.gaussian() == b.gaussian());
}

TEST_CASE("cifar batch layout: planar records become HWC pixels") {
  testing::TempDir dir;
  std::vector<std::uint8_t> rec(kCifarRecordBytes);
  rec[0] = 7;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 1024; ++i) rec[1 + c * 1024 + i] = static_cast<std::uint8_t>((i * 3 + c * 50) & 0xff);
  {
    std::ofstream out(dir / "b.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  const auto imgs = read_cifar_batch(dir / "b.bin");
  REQUIRE(imgs.size() == 1);
  CHECK(imgs[0].label == 7);
  // Row 2, column 5 is planar offset 2*32+5 = 69.
  for (int c = 0; c < 3; ++c) CHECK(imgs[0].pixels[pixel_index(2, 5, c)] == rec[1 + c * 1024 + 69]);
  CHECK(pixel_index(2, 5, 1) == (2 * 32 + 5) * 3 + 1);

  write_cifar_batch(dir / "c.bin", imgs);
  CHECK(testing::read_bytes(dir / "c.bin") == rec);
}

TEST_CASE("cifar batch errors name the file") {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "short.bin", std::ios::binary);
    out << std::string(kCifarRecordBytes + 5, '\0');
  }
  CHECK_THROWS_WITH_AS(read_cifar_batch(dir / "short.bin"), doctest::Contains("short.bin"), FormatError);
  {
    std::string bad(kCifarRecordBytes, '\0');
    bad[0] = 12;
    std::ofstream out(dir / "label.bin", std::ios::binary);
    out << bad;
  }
  CHECK_THROWS_AS(read_cifar_batch(dir / "label.bin"), FormatError);
  CHECK_THROWS_WITH_AS(load_cifar10(dir / "nowhere"), doctest::Contains("data_batch_1"), FormatError);
}

TEST_CASE("full dataset load preserves order") {
  testing::TempDir dir;
  testing::write_synthetic_cifar(dir.path(), 4, 6);
  const Dataset ds = load_cifar10(dir.path());
  CHECK(ds.train.size() == 20);
  CHECK(ds.test.size() == 6);
  CHECK(ds.train[4] == read_cifar_batch(dir / "data_batch_2.bin")[0]);
  const Dataset sub = take_subset(ds, 5, 2);
  CHECK(sub.train.size() == 5);
  CHECK(sub.test.size() == 2);
  CHECK(sub.train[3] == ds.train[3]);
}

TEST_CASE("byte/float conversion") {
  CHECK(float_to_byte(0.0f) == 0);
  CHECK(float_to_byte(1.0f) == 255);
  CHECK(float_to_byte(-3.0f) == 0);
  CHECK(float_to_byte(7.0f) == 255);
  CHECK(float_to_byte(std::nanf("")) == 0);
  CHECK(float_to_byte(127.5f / 255.0f) == 128);
  for (int v = 0; v < 256; ++v) CHECK(float_to_byte(static_cast<float>(v) / 255.0f) == v);
  const ImageU8 img = testing::synthetic_image(1);
  ImageU8 back = to_bytes(to_float(img));
  back.label = img.label;
  CHECK(back == img);
}

TEST_CASE("sampling without replacement") {
  const auto a = sample_indices(100, 40, 5);
  const auto b = sample_indices(100, 40, 5);
  CHECK(a == b);
  CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 40);
  CHECK(*std::max_element(a.begin(), a.end()) < 100);
  CHECK(sample_indices(100, 40, 6) != a);
  const auto all = sample_indices(10, 10, 1);
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 10);
  CHECK_THROWS_AS(sample_indices(10, 11, 1), std::invalid_argument);
}
