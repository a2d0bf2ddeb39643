#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semlink/channel.hpp"
#include "semlink/rng.hpp"

using namespace semlink;

namespace {

std::vector<double> random_block(std::size_t n, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = scale * (rng.gaussian() + 0.3);
  return x;
}

double mean_square(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("snr parsing and noise variance") {
  CHECK(parse_snr_db("inf") == kNoiselessSnrDb);
  CHECK(parse_snr_db("12.5") == 12.5);
  CHECK_THROWS_AS(parse_snr_db("loud"), std::invalid_argument);
  CHECK_THROWS_AS(parse_snr_db("-inf"), std::invalid_argument);
  CHECK(format_snr_db(kNoiselessSnrDb) == "inf");
  CHECK(format_snr_db(15) == "15");
  CHECK(snr_to_noise_var(kNoiselessSnrDb) == 0.0);
  CHECK(snr_to_noise_var(0) == doctest::Approx(1.0));
  CHECK(snr_to_noise_var(20) == doctest::Approx(0.01));
  CHECK(parse_channel_model("rayleigh") == ChannelModel::kRayleigh);
  CHECK(to_string(ChannelModel::kAwgn) == "awgn");
  CHECK_THROWS_AS(parse_channel_model("rician"), std::invalid_argument);
}

TEST_CASE("power normalization yields unit mean-square for any block") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t n = 1 + seed * 37;
    const double scale = std::pow(10.0, static_cast<double>(seed % 9) - 4.0);
    const auto x = random_block(n, seed, scale);
    const SymbolBlock b = normalize_power(x);
    CHECK(mean_square(b.symbols) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.power_coeff == doctest::Approx(std::sqrt(mean_square(x))).epsilon(1e-12));
    for (std::size_t i = 0; i < n; ++i) CHECK(b.symbols[i] * b.power_coeff == doctest::Approx(x[i]).epsilon(1e-12));
  }
  const std::vector<double> zeros(16, 0.0);
  CHECK_THROWS_AS(normalize_power(zeros), DegenerateBlockError);
  const std::vector<double> empty;
  CHECK_THROWS(normalize_power(empty));
}

TEST_CASE("noiseless channel is an exact roundtrip for both models") {
  const auto x = random_block(3072, 4, 2.5);
  const SymbolBlock b = normalize_power(x);
  for (ChannelModel m : {ChannelModel::kAwgn, ChannelModel::kRayleigh}) {
    const ChannelSpec spec{m, kNoiselessSnrDb, 11};
    const auto y = equalize(apply_channel(b, spec), b.power_coeff);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
  }
}

TEST_CASE("channel output depends only on the seed") {
  const auto x = random_block(512, 1, 1.0);
  const SymbolBlock b = normalize_power(x);
  const ChannelSpec s1{ChannelModel::kRayleigh, 10, 77};
  const auto a = apply_channel(b, s1);
  const auto c = apply_channel(b, s1);
  CHECK(a.received == c.received);
  CHECK(a.gains == c.gains);
  ChannelSpec s2 = s1;
  s2.seed = 78;
  CHECK(apply_channel(b, s2).received != a.received);
}

TEST_CASE("awgn noise has the configured variance") {
  const std::vector<double> zeros(200000, 0.0);
  const SymbolBlock block{std::vector<double>(200000, 0.0), 1.0};
  const ChannelSpec spec{ChannelModel::kAwgn, 10, 5};
  const auto rx = apply_channel(block, spec);
  double re2 = 0, im2 = 0;
  for (const auto& y : rx.received) {
    re2 += y.real() * y.real();
    im2 += y.imag() * y.imag();
  }
  const double n = static_cast<double>(rx.received.size());
  // Real symbols on AWGN carry real noise.
  CHECK(re2 / n == doctest::Approx(0.1).epsilon(0.02));
  CHECK(im2 == 0.0);
  for (const auto& h : rx.gains) REQUIRE(h == cplx(1.0, 0.0));

  const std::vector<cplx> csym(200000, cplx(0, 0));
  const auto crx = apply_channel_complex(csym, spec);
  double total = 0;
  for (const auto& y : crx.received) total += std::norm(y);
  CHECK(total / n == doctest::Approx(0.1).epsilon(0.02));
}

TEST_CASE("rayleigh gains: unit mean power and Rayleigh amplitude law") {
  const ChannelSpec spec{ChannelModel::kRayleigh, 20, 2024};
  ChannelRealizer real(spec, false);
  const std::size_t n = 1000000;
  std::vector<double> amp(n);
  double power = 0;
  for (auto& a : amp) {
    const auto d = real.next();
    a = std::abs(d.h);
    power += std::norm(d.h);
  }
  CHECK(power / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.005));
  CHECK(*std::min_element(amp.begin(), amp.end()) >= kDefaultGainFloor);

  // Kolmogorov-Smirnov against F(r) = 1 - exp(-r^2), conditioned on r >= floor.
  std::sort(amp.begin(), amp.end());
  const double f0 = 1.0 - std::exp(-kDefaultGainFloor * kDefaultGainFloor);
  double d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = (1.0 - std::exp(-amp[i] * amp[i]) - f0) / (1.0 - f0);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  CHECK(d < 0.01);
  // A wrong scale (E|h|^2 = 2) must fail the same test.
  double d_wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = 1.0 - std::exp(-amp[i] * amp[i] / 2.0);
    d_wrong = std::max(d_wrong, std::abs(f - static_cast<double>(i) / n));
  }
  CHECK(d_wrong > 0.05);
}

TEST_CASE("equalization undoes the gain with perfect CSI") {
  const auto x = random_block(4096, 8, 0.7);
  const SymbolBlock b = normalize_power(x);
  const ChannelSpec spec{ChannelModel::kRayleigh, 30, 3};
  const auto rx = apply_channel(b, spec);
  const auto y = equalize(rx, b.power_coeff);
  // Oracle: recompute Re(c * y / h) from the raw received values.
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expect = (b.power_coeff * rx.received[i] / rx.gains[i]).real();
    CHECK(y[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  double err = 0;
  for (std::size_t i = 0; i < x.size(); ++i) err += (y[i] - x[i]) * (y[i] - x[i]);
  CHECK(err / static_cast<double>(x.size()) < 0.05 * mean_square(x));
}

TEST_CASE("training shortcut matches the full channel path draw for draw") {
  Rng rng(12);
  std::vector<float> xf(3072);
  for (auto& v : xf) v = static_cast<float>(rng.gaussian() * 1.7 + 0.2);
  const std::vector<double> xd(xf.begin(), xf.end());
  for (ChannelModel m : {ChannelModel::kAwgn, ChannelModel::kRayleigh}) {
    for (double snr : {0.0, 15.0, 35.0}) {
      const ChannelSpec spec{m, snr, 99};
      std::vector<float> fast(xf.size());
      const double c = channel_pass_training(xf, spec, fast);
      const SymbolBlock b = normalize_power(xd);
      CHECK(c == doctest::Approx(b.power_coeff).epsilon(1e-6));
      const auto slow = equalize(apply_channel(b, spec), b.power_coeff);
      double worst = 0;
      for (std::size_t i = 0; i < xf.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(fast[i]) - slow[i]) / (1.0 + std::abs(slow[i])));
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("channel spec validation") {
  ChannelSpec s;
  CHECK_NOTHROW(s.validate());
  s.snr_db = std::nan("");
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.snr_db = 10;
  s.h_floor = -1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
