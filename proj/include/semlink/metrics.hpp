#pragma once

#include <limits>
#include <span>
#include <utility>

#include "semlink/dataset.hpp"

namespace semlink {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

struct MetricReport {
  double ssim = 0.0;
  double psnr_db = 0.0;
};

// SSIM with an 11x11 Gaussian window (sigma 1.5), valid positions only,
// dynamic range 1, computed per RGB channel and averaged.
double ssim(const ImageF& a, const ImageF& b);

// 10 log10(1 / mse); kInfinitePsnr for identical images.
double psnr(const ImageF& a, const ImageF& b);
double mse(const ImageF& a, const ImageF& b);

MetricReport measure(const ImageF& reference, const ImageF& test);

struct Aggregate {
  double ssim_mean = 0.0;
  double ssim_std = 0.0;  // population
  double psnr_mean = 0.0;
};

Aggregate aggregate(std::span<const MetricReport> reports);
Aggregate aggregate(std::span<const std::pair<ImageF, ImageF>> pairs);

}  // namespace semlink
