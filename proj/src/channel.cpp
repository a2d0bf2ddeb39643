#include "semlink/channel.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace semlink {

std::string_view to_string(ChannelModel m) { return m == ChannelModel::kAwgn ? "awgn" : "rayleigh"; }

ChannelModel parse_channel_model(std::string_view s) {
  if (s == "awgn") return ChannelModel::kAwgn;
  if (s == "rayleigh") return ChannelModel::kRayleigh;
  throw std::invalid_argument("unknown channel '" + std::string(s) + "' (expected awgn|rayleigh)");
}

double parse_snr_db(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "inf" || lower == "+inf" || lower == "infinity") return kNoiselessSnrDb;
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw std::invalid_argument("invalid SNR '" + std::string(s) + "' (expected dB number or inf)");
  }
  return v;
}

std::string format_snr_db(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", snr_db);
  return buf;
}

void ChannelSpec::validate() const {
  if (std::isnan(snr_db) || (std::isinf(snr_db) && snr_db < 0)) {
    throw std::invalid_argument("SNR must be finite or +inf");
  }
  if (!(h_floor >= 0.0) || h_floor >= 1.0) throw std::invalid_argument("gain floor must lie in [0, 1)");
}

SymbolBlock normalize_power(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("cannot normalize an empty symbol block");
  double sum_sq = 0.0;
  for (double v : x) sum_sq += v * v;
  if (!(sum_sq > 0.0)) throw DegenerateBlockError("all-zero symbol block has no power coefficient");
  SymbolBlock out;
  out.power_coeff = std::sqrt(sum_sq / static_cast<double>(x.size()));
  out.symbols.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.symbols[i] = x[i] / out.power_coeff;
  return out;
}

double power_coefficient(std::span<const float> x) {
  if (x.empty()) throw std::invalid_argument("cannot normalize an empty symbol block");
  double sum_sq = 0.0;
  for (float v : x) sum_sq += static_cast<double>(v) * static_cast<double>(v);
  if (!(sum_sq > 0.0)) throw DegenerateBlockError("all-zero symbol block has no power coefficient");
  return std::sqrt(sum_sq / static_cast<double>(x.size()));
}

double snr_to_noise_var(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

ChannelRealizer::ChannelRealizer(const ChannelSpec& spec, bool complex_awgn_noise)
    : model_(spec.model),
      noise_var_(snr_to_noise_var(spec.snr_db)),
      noise_std_(std::sqrt(noise_var_)),
      floor_sq_(spec.h_floor * spec.h_floor),
      complex_awgn_(complex_awgn_noise),
      rng_(spec.seed) {
  spec.validate();
}

ChannelRealizer::Draw ChannelRealizer::next() {
  Draw d{cplx(1.0, 0.0), cplx(0.0, 0.0)};
  if (model_ == ChannelModel::kRayleigh) {
    constexpr double kHalf = 0.70710678118654752440;
    do {
      const double re = rng_.gaussian();
      const double im = rng_.gaussian();
      d.h = cplx(re * kHalf, im * kHalf);
    } while (std::norm(d.h) < floor_sq_);
  }
  if (model_ == ChannelModel::kAwgn && !complex_awgn_) {
    d.n = cplx(noise_std_ * rng_.gaussian(), 0.0);
  } else {
    const double s = noise_std_ * 0.70710678118654752440;
    const double re = rng_.gaussian();
    const double im = rng_.gaussian();
    d.n = cplx(s * re, s * im);
  }
  return d;
}

ReceivedBlock apply_channel(const SymbolBlock& block, const ChannelSpec& spec) {
  ChannelRealizer realizer(spec, /*complex_awgn_noise=*/false);
  ReceivedBlock rx;
  rx.noise_var = realizer.noise_var();
  rx.received.resize(block.symbols.size());
  rx.gains.resize(block.symbols.size());
  for (std::size_t i = 0; i < block.symbols.size(); ++i) {
    const auto d = realizer.next();
    rx.gains[i] = d.h;
    rx.received[i] = d.h * block.symbols[i] + d.n;
  }
  return rx;
}

ReceivedBlock apply_channel_complex(std::span<const cplx> symbols, const ChannelSpec& spec) {
  ChannelRealizer realizer(spec, /*complex_awgn_noise=*/true);
  ReceivedBlock rx;
  rx.noise_var = realizer.noise_var();
  rx.received.resize(symbols.size());
  rx.gains.resize(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const auto d = realizer.next();
    rx.gains[i] = d.h;
    rx.received[i] = d.h * symbols[i] + d.n;
  }
  return rx;
}

std::vector<double> equalize(const ReceivedBlock& rx, double power_coeff) {
  std::vector<double> out(rx.received.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (power_coeff * rx.received[i] / rx.gains[i]).real();
  return out;
}

std::vector<cplx> equalize_complex(const ReceivedBlock& rx) {
  std::vector<cplx> out(rx.received.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rx.received[i] / rx.gains[i];
  return out;
}

double channel_pass_training(std::span<const float> x, const ChannelSpec& spec, std::span<float> out) {
  if (out.size() != x.size()) throw std::invalid_argument("channel_pass_training: output size mismatch");
  const double c = power_coefficient(x);
  ChannelRealizer realizer(spec, /*complex_awgn_noise=*/false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto d = realizer.next();
    out[i] = static_cast<float>(static_cast<double>(x[i]) + c * (d.n / d.h).real());
  }
  return c;
}

}  // namespace semlink
