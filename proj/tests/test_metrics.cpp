#include <doctest.h>

#include <cmath>
#include <vector>

#include "semlink/metrics.hpp"
#include "test_support.hpp"

using namespace semlink;

namespace {

// Direct transcription of the windowed SSIM definition, one channel at a
// time, with no shared code with the library.
double naive_ssim(const ImageF& a, const ImageF& b) {
  double w[11][11], wsum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) wsum += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 2.25));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    for (int y = 0; y + 11 <= 32; ++y) {
      for (int x = 0; x + 11 <= 32; ++x) {
        double mx = 0, my = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            mx += w[i][j] / wsum * a.pixels[pixel_index(y + i, x + j, c)];
            my += w[i][j] / wsum * b.pixels[pixel_index(y + i, x + j, c)];
          }
        double vx = 0, vy = 0, cxy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double da = a.pixels[pixel_index(y + i, x + j, c)] - mx;
            const double db = b.pixels[pixel_index(y + i, x + j, c)] - my;
            vx += w[i][j] / wsum * da * da;
            vy += w[i][j] / wsum * db * db;
            cxy += w[i][j] / wsum * da * db;
          }
        acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
    total += acc / (22.0 * 22.0);
  }
  return total / 3.0;
}

ImageF noisy(const ImageF& img, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  ImageF out = img;
  for (auto& v : out.pixels) v = static_cast<float>(std::clamp(v + sigma * rng.gaussian(), 0.0, 1.0));
  return out;
}

}  // namespace

TEST_CASE("ssim agrees with a direct evaluation") {
  const ImageF a = to_float(testing::synthetic_image(1));
  for (double sigma : {0.01, 0.05, 0.2}) {
    const ImageF b = noisy(a, sigma, 3);
    CHECK(ssim(a, b) == doctest::Approx(naive_ssim(a, b)).epsilon(1e-9));
  }
  const ImageF c = to_float(testing::synthetic_image(2));
  CHECK(ssim(a, c) == doctest::Approx(naive_ssim(a, c)).epsilon(1e-9));
}

TEST_CASE("ssim axioms: identity, symmetry, range") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ImageF a = to_float(testing::synthetic_image(s));
    const ImageF b = noisy(a, 0.02 * static_cast<double>(s + 1), s);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(ssim(a, b) <= 1.0);
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) < 1.0);
  }
  // Anti-correlated texture gives negative structure.
  ImageF orig;
  Rng rng(4);
  for (auto& v : orig.pixels) v = static_cast<float>(rng.uniform());
  ImageF inv = orig;
  for (auto& v : inv.pixels) v = 1.0f - v;
  CHECK(ssim(orig, inv) < 0.0);
}

TEST_CASE("ssim decreases with noise") {
  const ImageF a = to_float(testing::synthetic_image(5));
  double prev = 1.0;
  for (double sigma : {0.01, 0.03, 0.1, 0.3}) {
    const double s = ssim(a, noisy(a, sigma, 1));
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("psnr") {
  ImageF a;
  a.pixels.fill(0.5f);
  ImageF b = a;
  CHECK(std::isinf(psnr(a, b)));
  for (auto& v : b.pixels) v = 0.6f;
  CHECK(mse(a, b) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  const auto r = measure(a, b);
  CHECK(r.psnr_db == doctest::Approx(20.0).epsilon(1e-5));
}

TEST_CASE("aggregate uses the population standard deviation") {
  const std::vector<MetricReport> reps{{0.2, 10}, {0.4, 20}, {0.9, 30}};
  const Aggregate g = aggregate(reps);
  CHECK(g.ssim_mean == doctest::Approx(0.5));
  CHECK(g.ssim_std == doctest::Approx(std::sqrt((0.09 + 0.01 + 0.16) / 3.0)));
  CHECK(g.psnr_mean == doctest::Approx(20.0));
  CHECK_THROWS_AS(aggregate(std::span<const MetricReport>{}), std::invalid_argument);
}
