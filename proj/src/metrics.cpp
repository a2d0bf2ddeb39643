#include "semlink/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace semlink {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr int kValid = kImageSide - kWin + 1;  // 22

std::array<double, kWin * kWin> make_window() {
  std::array<double, kWin> g{};
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
    sum += g[i];
  }
  std::array<double, kWin * kWin> w{};
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) w[i * kWin + j] = (g[i] / sum) * (g[j] / sum);
  return w;
}

const std::array<double, kWin * kWin>& window() {
  static const auto w = make_window();
  return w;
}

double ssim_channel(const ImageF& a, const ImageF& b, int c) {
  const auto& w = window();
  double total = 0.0;
  for (int oy = 0; oy < kValid; ++oy) {
    for (int ox = 0; ox < kValid; ++ox) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          const double wt = w[i * kWin + j];
          const double va = a.pixels[pixel_index(oy + i, ox + j, c)];
          const double vb = b.pixels[pixel_index(oy + i, ox + j, c)];
          mu_a += wt * va;
          mu_b += wt * vb;
          aa += wt * va * va;
          bb += wt * vb * vb;
          ab += wt * va * vb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
      const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
      total += num / den;
    }
  }
  return total / (kValid * kValid);
}

}  // namespace

double ssim(const ImageF& a, const ImageF& b) {
  double s = 0.0;
  for (int c = 0; c < kImageChannels; ++c) s += ssim_channel(a, b, c);
  return s / kImageChannels;
}

double mse(const ImageF& a, const ImageF& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kImageElems; ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(kImageElems);
}

double psnr(const ImageF& a, const ImageF& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(1.0 / m);
}

MetricReport measure(const ImageF& reference, const ImageF& test) {
  return {ssim(reference, test), psnr(reference, test)};
}

Aggregate aggregate(std::span<const MetricReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no image pairs");
  const double n = static_cast<double>(reports.size());
  Aggregate out;
  for (const auto& r : reports) {
    out.ssim_mean += r.ssim;
    out.psnr_mean += r.psnr_db;
  }
  out.ssim_mean /= n;
  out.psnr_mean /= n;
  double var = 0.0;
  for (const auto& r : reports) var += (r.ssim - out.ssim_mean) * (r.ssim - out.ssim_mean);
  out.ssim_std = std::sqrt(var / n);
  return out;
}

Aggregate aggregate(std::span<const std::pair<ImageF, ImageF>> pairs) {
  std::vector<MetricReport> reports;
  reports.reserve(pairs.size());
  for (const auto& [a, b] : pairs) reports.push_back(measure(a, b));
  return aggregate(reports);
}

}  // namespace semlink
