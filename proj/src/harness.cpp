#include "semlink/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "semlink/image_io.hpp"
#include "semlink/metrics.hpp"
#include "semlink/qam.hpp"
#include "semlink/rng.hpp"

namespace semlink {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

std::vector<double> default_snr_grid() {
  std::vector<double> g;
  for (int s = 0; s <= 40; s += 5) g.push_back(s);
  return g;
}

std::vector<double> parse_snr_grid(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) throw std::invalid_argument("empty SNR grid");
  std::vector<double> out;
  if (t.find(':') != std::string::npos) {
    const auto parts = split(t, ':');
    if (parts.size() != 3) throw std::invalid_argument("SNR range must be start:stop:step");
    const double start = parse_snr_db(parts[0]), stop = parse_snr_db(parts[1]), step = parse_snr_db(parts[2]);
    if (!(step > 0) || std::isinf(start) || std::isinf(stop) || stop < start) {
      throw std::invalid_argument("bad SNR range '" + t + "'");
    }
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
  } else {
    for (const auto& p : split(t, ',')) out.push_back(parse_snr_db(p));
  }
  return out;
}

std::uint64_t cell_image_seed(std::uint64_t run_seed, System system, ChannelModel channel, double snr_db,
                              std::size_t image_index) {
  return derive_seed(run_seed, {static_cast<std::uint64_t>(system), static_cast<std::uint64_t>(channel),
                                std::bit_cast<std::uint64_t>(snr_db), image_index});
}

std::vector<EvalRecord> run_sweep(const DnnLink* dnn, const Dataset& ds, const SweepConfig& cfg) {
  if (cfg.n_images == 0) throw std::invalid_argument("sweep needs at least one image");
  const bool need_dnn = std::find(cfg.systems.begin(), cfg.systems.end(), System::kDnn) != cfg.systems.end();
  if (need_dnn && !dnn) throw std::invalid_argument("dnn system requested without a checkpoint");

  const auto images = sample_images(ds, Split::kTest, cfg.n_images, derive_seed(cfg.seed, {0x73656cULL}));
  std::vector<ImageF> reference(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) reference[i] = to_float(images[i]);

  std::vector<EvalRecord> records;
  for (System system : cfg.systems) {
    for (ChannelModel channel : cfg.channels) {
      for (double snr : cfg.snr_grid) {
        std::vector<ChannelSpec> specs(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) {
          specs[i] = {channel, snr, cell_image_seed(cfg.seed, system, channel, snr, i), cfg.h_floor};
        }
        std::vector<ImageF> rec;
        if (system == System::kDnn) {
          rec = dnn->transmit(reference, specs);
        } else {
          rec.reserve(images.size());
          for (std::size_t i = 0; i < images.size(); ++i) rec.push_back(to_float(qam::transmit_qam(images[i], specs[i])));
        }
        std::vector<MetricReport> reports(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) reports[i] = measure(reference[i], rec[i]);
        const auto agg = aggregate(reports);
        records.push_back({system, channel, snr, images.size(), agg.ssim_mean, agg.ssim_std, agg.psnr_mean, cfg.seed});
      }
    }
  }
  return records;
}

std::string format_csv(std::vector<EvalRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    return std::tuple(to_string(a.system), to_string(a.channel), a.snr_db) <
           std::tuple(to_string(b.system), to_string(b.channel), b.snr_db);
  });
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    os << to_string(r.system) << ',' << to_string(r.channel) << ',' << format_snr_db(r.snr_db) << ',' << r.n_images
       << ',' << fmt6(r.ssim_mean) << ',' << fmt6(r.ssim_std) << ',' << fmt6(r.psnr_mean_db) << ',' << r.seed << '\n';
  }
  return os.str();
}

void write_csv(const std::vector<EvalRecord>& records, const fs::path& path) {
  const std::string text = format_csv(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<EvalRecord> parse_csv(std::string_view text) {
  std::vector<EvalRecord> out;
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || trim(line) != kCsvHeader) throw std::invalid_argument("CSV header mismatch");
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw std::invalid_argument("CSV row has " + std::to_string(f.size()) + " fields");
    EvalRecord r;
    r.system = parse_system(f[0]);
    r.channel = parse_channel_model(f[1]);
    r.snr_db = parse_snr_db(f[2]);
    r.n_images = std::stoul(f[3]);
    r.ssim_mean = std::stod(f[4]);
    r.ssim_std = std::stod(f[5]);
    r.psnr_mean_db = f[6] == "inf" ? kInfinitePsnr : std::stod(f[6]);
    r.seed = std::stoull(f[7]);
    out.push_back(r);
  }
  return out;
}

std::vector<RenderedFile> render_comparison(const DnnLink* dnn, const ImageU8& img, const std::vector<double>& grid,
                                            ChannelModel channel, const std::vector<System>& systems,
                                            std::uint64_t seed, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<RenderedFile> files;
  write_png(out_dir / "original.png", to_rgb(img));
  files.push_back({"original.png", "original", kNoiselessSnrDb, 1.0});
  const ImageF reference = to_float(img);
  for (System system : systems) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double snr = grid[k];
      const ChannelSpec spec{channel, snr, cell_image_seed(seed, system, channel, snr, 0)};
      const ImageU8 out = to_bytes(transmit_one(system, dnn, img, spec));
      const std::string name =
          std::string(to_string(system)) + "_" + std::string(to_string(channel)) + "_" + format_snr_db(snr) + "dB.png";
      write_png(out_dir / name, to_rgb(out));
      // Score the bytes that were written, not the float reconstruction.
      files.push_back({name, std::string(to_string(system)), snr, ssim(reference, to_float(out))});
    }
  }
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& f : files) {
    nlohmann::json snr = std::isinf(f.snr_db) ? nlohmann::json("inf") : nlohmann::json(f.snr_db);
    if (f.system == "original") snr = nullptr;
    manifest.push_back({{"file", f.file}, {"system", f.system}, {"snr_db", snr}, {"ssim", f.ssim}});
  }
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest in " + out_dir.string());
  return files;
}

}  // namespace semlink
