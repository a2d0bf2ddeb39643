#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/dataset.hpp"
#include "semlink/systems.hpp"

namespace semlink {

struct EvalRecord {
  System system = System::kDnn;
  ChannelModel channel = ChannelModel::kAwgn;
  double snr_db = 0.0;
  std::size_t n_images = 0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  double psnr_mean_db = 0.0;
  std::uint64_t seed = 0;
};

// "0:40:5" (inclusive range), "0,10,inf" (list), or a single value.
std::vector<double> parse_snr_grid(std::string_view text);
std::vector<double> default_snr_grid();  // 0, 5, ..., 40

struct SweepConfig {
  std::vector<double> snr_grid = default_snr_grid();
  std::vector<ChannelModel> channels{ChannelModel::kAwgn, ChannelModel::kRayleigh};
  std::vector<System> systems{System::kDnn, System::kQam256};
  std::size_t n_images = 320;
  std::uint64_t seed = 0;
  double h_floor = kDefaultGainFloor;
};

// Per-image channel seed for one sweep cell.
std::uint64_t cell_image_seed(std::uint64_t run_seed, System system, ChannelModel channel, double snr_db,
                              std::size_t image_index);

// One record per (system, channel, snr). Every cell consumes the same seeded
// selection of test images. `dnn` may be null when systems excludes dnn.
std::vector<EvalRecord> run_sweep(const DnnLink* dnn, const Dataset& ds, const SweepConfig& cfg);

// Header + one row per record, sorted by (system, channel, snr_db); floats
// printed with 6 significant digits.
std::string format_csv(std::vector<EvalRecord> records);
void write_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path);
std::vector<EvalRecord> parse_csv(std::string_view text);

inline constexpr std::string_view kCsvHeader = "system,channel,snr_db,n_images,ssim_mean,ssim_std,psnr_mean_db,seed";

struct RenderedFile {
  std::string file;
  std::string system;  // "original", "dnn" or "qam256"
  double snr_db = 0.0;
  double ssim = 1.0;
};

// Writes original.png plus <system>_<channel>_<snr>dB.png per (system, snr)
// and manifest.json listing each file's SSIM against the original.
std::vector<RenderedFile> render_comparison(const DnnLink* dnn, const ImageU8& img, const std::vector<double>& grid,
                                            ChannelModel channel, const std::vector<System>& systems,
                                            std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace semlink
