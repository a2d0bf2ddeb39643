#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "semlink/harness.hpp"
#include "semlink/metrics.hpp"
#include "semlink/qam.hpp"
#include "test_support.hpp"

using namespace semlink;

TEST_CASE("snr grid parsing") {
  CHECK(parse_snr_grid("0:40:5") == default_snr_grid());
  CHECK(default_snr_grid().size() == 9);
  CHECK(parse_snr_grid("0:10:2.5") == std::vector<double>{0, 2.5, 5, 7.5, 10});
  CHECK(parse_snr_grid("5, 10,inf") == std::vector<double>{5, 10, kNoiselessSnrDb});
  CHECK(parse_snr_grid("12") == std::vector<double>{12});
  CHECK_THROWS_AS(parse_snr_grid(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_snr_grid("0:10"), std::invalid_argument);
  CHECK_THROWS_AS(parse_snr_grid("10:0:5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_snr_grid("0:10:0"), std::invalid_argument);
}

namespace {

Dataset dataset() {
  Dataset ds;
  ds.train = testing::synthetic_images(4, 1);
  ds.test = testing::synthetic_images(24, 2);
  return ds;
}

}  // namespace

TEST_CASE("full sweep shape, ordering and determinism") {
  const Dataset ds = dataset();
  const auto cfg = CodecConfig::tiny();
  const DnnLink dnn(cfg, init_params(cfg, 4));
  SweepConfig sc;
  sc.n_images = 6;
  sc.seed = 11;
  const auto rows = run_sweep(&dnn, ds, sc);
  CHECK(rows.size() == 36);
  const std::string csv = format_csv(rows);
  CHECK(csv == format_csv(run_sweep(&dnn, ds, sc)));

  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == kCsvHeader);
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  CHECK(lines.size() == 36);
  CHECK(lines.front().rfind("dnn,awgn,0,6,", 0) == 0);
  CHECK(lines.back().rfind("qam256,rayleigh,40,6,", 0) == 0);
  CHECK(lines[1].rfind("dnn,awgn,5,", 0) == 0);

  const auto parsed = parse_csv(csv);
  REQUIRE(parsed.size() == 36);
  CHECK(format_csv(parsed) == csv);

  sc.seed = 12;
  CHECK(format_csv(run_sweep(&dnn, ds, sc)) != csv);
}

TEST_CASE("sweep cells match a direct per-image computation") {
  const Dataset ds = dataset();
  SweepConfig sc;
  sc.systems = {System::kQam256};
  sc.channels = {ChannelModel::kAwgn};
  sc.snr_grid = {20};
  sc.n_images = 5;
  sc.seed = 3;
  const auto rows = run_sweep(nullptr, ds, sc);
  REQUIRE(rows.size() == 1);
  const auto imgs = sample_images(ds, Split::kTest, 5, derive_seed(3, {0x73656cULL}));
  std::vector<MetricReport> reps;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const ChannelSpec spec{ChannelModel::kAwgn, 20, cell_image_seed(3, System::kQam256, ChannelModel::kAwgn, 20, i)};
    reps.push_back(measure(to_float(imgs[i]), to_float(qam::transmit_qam(imgs[i], spec))));
  }
  const auto agg = aggregate(reps);
  CHECK(rows[0].ssim_mean == doctest::Approx(agg.ssim_mean).epsilon(1e-12));
  CHECK(rows[0].ssim_std == doctest::Approx(agg.ssim_std).epsilon(1e-12));
  CHECK(rows[0].n_images == 5);
  CHECK_THROWS_AS(run_sweep(nullptr, ds, SweepConfig{}), std::invalid_argument);
}

TEST_CASE("noiseless qam cells are perfect") {
  const Dataset ds = dataset();
  SweepConfig sc;
  sc.systems = {System::kQam256};
  sc.snr_grid = {kNoiselessSnrDb};
  sc.n_images = 4;
  const auto rows = run_sweep(nullptr, ds, sc);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.ssim_mean == doctest::Approx(1.0));
    CHECK(r.ssim_std == doctest::Approx(0.0));
    CHECK(std::isinf(r.psnr_mean_db));
  }
  const std::string csv = format_csv(rows);
  CHECK(csv.find(",inf,4,1,0,inf,") != std::string::npos);
}

TEST_CASE("comparison renders and manifest") {
  testing::TempDir dir;
  const auto cfg = CodecConfig::tiny();
  const DnnLink dnn(cfg, init_params(cfg, 1));
  const ImageU8 img = testing::synthetic_image(8);
  const auto files = render_comparison(&dnn, img, {0, 20, kNoiselessSnrDb}, ChannelModel::kAwgn,
                                       {System::kDnn, System::kQam256}, 5, dir.path());
  CHECK(files.size() == 7);
  CHECK(std::filesystem::exists(dir / "original.png"));
  CHECK(std::filesystem::exists(dir / "qam256_awgn_20dB.png"));
  CHECK(std::filesystem::exists(dir / "dnn_awgn_infdB.png"));
  CHECK(to_image32(read_png(dir / "qam256_awgn_infdB.png")).pixels == img.pixels);
  std::ifstream in(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  REQUIRE(manifest.size() == 7);
  CHECK(manifest[0]["snr_db"].is_null());
  for (const auto& m : manifest) {
    if (m["file"] == "qam256_awgn_infdB.png") {
      CHECK(m["ssim"].get<double>() == doctest::Approx(1.0));
      CHECK(m["snr_db"] == "inf");
    }
  }
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++n;
  CHECK(n == 8);
}
