#include "semlink/qam.hpp"

#include <algorithm>
#include <cmath>

namespace semlink::qam {

namespace {

constexpr double kSqrt170 = 13.038404810405298;

// Decision on one axis. Returns the Gray label (nibble) of the nearest level.
std::uint8_t decide_axis(double amplitude) {
  // Level k sits at 2k - 15 in unscaled units, so t = (u + 15) / 2 is the
  // fractional level index.
  const double t = (amplitude * kSqrt170 + 15.0) / 2.0;
  if (!(t > 0.0)) return gray_encode(0);
  if (t >= 15.0) return gray_encode(15);
  const double lo = std::floor(t);
  const double frac = t - lo;
  const auto k_lo = static_cast<std::uint8_t>(lo);
  const auto k_hi = static_cast<std::uint8_t>(k_lo + 1);
  // Midpoints are detected with a small absolute tolerance so that symbols
  // built as (p + q) / 2 in scaled units still count as ties.
  constexpr double kTieTol = 1e-9;
  if (std::abs(frac - 0.5) <= kTieTol) return std::min(gray_encode(k_lo), gray_encode(k_hi));
  return gray_encode(frac < 0.5 ? k_lo : k_hi);
}

Constellation256 build() {
  Constellation256 c{};
  for (int b = 0; b < 256; ++b) {
    const int ki = gray_decode(static_cast<std::uint8_t>(b >> 4));
    const int kq = gray_decode(static_cast<std::uint8_t>(b & 15));
    c.points[b] = cplx(level_amplitude(ki) * kScale, level_amplitude(kq) * kScale);
  }
  return c;
}

}  // namespace

const Constellation256& constellation() {
  static const Constellation256 table = build();
  return table;
}

cplx map_symbol(std::uint8_t byte) { return constellation().points[byte]; }

std::vector<cplx> map_qam256(std::span<const std::uint8_t> bytes) {
  std::vector<cplx> out(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = map_symbol(bytes[i]);
  return out;
}

std::uint8_t demap_symbol(cplx symbol) {
  // The grid is separable, so per-axis nearest levels give the nearest point
  // and per-axis smallest labels give the smallest tied byte.
  const std::uint8_t hi = decide_axis(symbol.real());
  const std::uint8_t lo = decide_axis(symbol.imag());
  return static_cast<std::uint8_t>((hi << 4) | lo);
}

std::vector<std::uint8_t> demap_qam256(std::span<const cplx> symbols) {
  std::vector<std::uint8_t> out(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) out[i] = demap_symbol(symbols[i]);
  return out;
}

ImageU8 transmit_qam(const ImageU8& img, const ChannelSpec& spec) {
  const auto tx = map_qam256(img.pixels);
  const auto rx = apply_channel_complex(tx, spec);
  const auto eq = equalize_complex(rx);
  ImageU8 out;
  out.label = img.label;
  for (std::size_t i = 0; i < kImageElems; ++i) out.pixels[i] = demap_symbol(eq[i]);
  return out;
}

double ser_closed_form(double snr_db) {
  const double snr = std::pow(10.0, snr_db / 10.0);
  const double arg = std::sqrt(3.0 * snr / 255.0);
  const double q = 0.5 * std::erfc(arg / std::sqrt(2.0));
  const double p_axis = 2.0 * (1.0 - 1.0 / 16.0) * q;
  return 1.0 - (1.0 - p_axis) * (1.0 - p_axis);
}

}  // namespace semlink::qam
