#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "semlink/rng.hpp"

namespace semlink {

using cplx = std::complex<double>;

enum class ChannelModel { kAwgn, kRayleigh };

std::string_view to_string(ChannelModel m);
ChannelModel parse_channel_model(std::string_view s);

// snr_db = +infinity requests a noiseless channel (sigma^2 = 0).
inline constexpr double kNoiselessSnrDb = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultGainFloor = 1e-3;

// Parses a decibel value; "inf" (any case) maps to kNoiselessSnrDb.
double parse_snr_db(std::string_view s);
std::string format_snr_db(double snr_db);

struct ChannelSpec {
  ChannelModel model = ChannelModel::kAwgn;
  double snr_db = kNoiselessSnrDb;
  std::uint64_t seed = 0;
  // Rayleigh gains with |h| below this are redrawn.
  double h_floor = kDefaultGainFloor;

  void validate() const;
};

struct SymbolBlock {
  std::vector<double> symbols;  // unit mean-square
  double power_coeff = 1.0;     // c, with raw = c * symbols
};

struct ReceivedBlock {
  std::vector<cplx> received;
  std::vector<cplx> gains;  // exactly 1 for AWGN
  double noise_var = 0.0;
};

class DegenerateBlockError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// c = sqrt(mean(x^2)); returns x / c.
SymbolBlock normalize_power(std::span<const double> x);
double power_coefficient(std::span<const float> x);

// sigma^2 = 10^(-snr_db / 10); 0 for the noiseless sentinel.
double snr_to_noise_var(double snr_db);

// Per-symbol channel draws. One instance consumes the generator in a fixed
// order so that every path (real DNN symbols, complex QAM symbols, training
// composite) sees the same law:
//   rayleigh: h from two Gaussians (redrawn while |h| < floor), then noise
//   awgn:     noise only
// Real-valued inputs get real noise N(0, sigma^2) on AWGN; every complex draw
// is circular with total variance sigma^2.
class ChannelRealizer {
 public:
  ChannelRealizer(const ChannelSpec& spec, bool complex_awgn_noise);

  struct Draw {
    cplx h;
    cplx n;
  };
  Draw next();
  double noise_var() const { return noise_var_; }

 private:
  ChannelModel model_;
  double noise_var_;
  double noise_std_;
  double floor_sq_;
  bool complex_awgn_;
  Rng rng_;
};

// y_i = h_i * xbar_i + n_i (real symbols on a complex channel).
ReceivedBlock apply_channel(const SymbolBlock& block, const ChannelSpec& spec);
// Complex-symbol variant used by the QAM baseline; AWGN noise is complex here.
ReceivedBlock apply_channel_complex(std::span<const cplx> symbols, const ChannelSpec& spec);

// Perfect-CSI equalization: xhat_i = Re(c * y_i / h_i).
std::vector<double> equalize(const ReceivedBlock& rx, double power_coeff);
// Complex equalization y_i / h_i (QAM path).
std::vector<cplx> equalize_complex(const ReceivedBlock& rx);

// Collapsed normalize -> channel -> equalize for training:
//   xhat = x + c * Re(n / h)
// with the same draws apply_channel would make for this seed. The map is
// affine in x with unit slope (c, h, n held fixed), so the backward pass is
// the identity. Returns c.
double channel_pass_training(std::span<const float> x, const ChannelSpec& spec, std::span<float> out);

}  // namespace semlink
