#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/dataset.hpp"

namespace semlink::qam {

// Square Gray-coded 256-QAM with unit average symbol power.
//
// A byte b splits into nibbles (b >> 4) -> in-phase, (b & 15) -> quadrature.
// Each nibble is a binary-reflected Gray code g = k ^ (k >> 1) of the level
// index k in 0..15, and level k sits at amplitude (2k - 15) / sqrt(170).
inline constexpr int kLevels = 16;
inline constexpr double kScale = 0.07669649888473704;  // 1 / sqrt(170)

constexpr std::uint8_t gray_encode(std::uint8_t k) { return static_cast<std::uint8_t>(k ^ (k >> 1)); }
constexpr std::uint8_t gray_decode(std::uint8_t g) {
  std::uint8_t k = g;
  for (std::uint8_t s = g >> 1; s != 0; s >>= 1) k ^= s;
  return k;
}

// Unscaled amplitude of level index k.
constexpr int level_amplitude(int k) { return 2 * k - 15; }

struct Constellation256 {
  std::array<cplx, 256> points;  // indexed by byte label
};

const Constellation256& constellation();

cplx map_symbol(std::uint8_t byte);
std::vector<cplx> map_qam256(std::span<const std::uint8_t> bytes);

// Hard nearest-point decision; exact ties go to the smaller byte label.
std::uint8_t demap_symbol(cplx symbol);
std::vector<std::uint8_t> demap_qam256(std::span<const cplx> symbols);

// bytes -> map -> channel (complex path) -> y/h -> demap -> bytes.
ImageU8 transmit_qam(const ImageU8& img, const ChannelSpec& spec);

// Square M-QAM symbol error probability for M = 256, unit symbol energy and
// complex noise of total variance 10^(-snr_db/10).
double ser_closed_form(double snr_db);

}  // namespace semlink::qam
