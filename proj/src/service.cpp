#include "semlink/service.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>

#include "semlink/codec.hpp"
#include "semlink/image_io.hpp"
#include "semlink/metrics.hpp"
#include "semlink/rng.hpp"

namespace semlink {

using nlohmann::json;

namespace {

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// Float metrics over an arbitrary-size raster, averaged over its 32x32 tiles.
MetricReport measure_raster(const RgbImage& reference, const RgbImage& test) {
  const auto a = split_tiles(reference);
  const auto b = split_tiles(test);
  double ssim_sum = 0.0, se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const ImageF fa = to_float(a[i]), fb = to_float(b[i]);
    ssim_sum += ssim(fa, fb);
    se += mse(fa, fb);
  }
  const double n = static_cast<double>(a.size());
  const double m = se / n;
  return {ssim_sum / n, m == 0.0 ? kInfinitePsnr : 10.0 * std::log10(1.0 / m)};
}

json number_or_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

struct ParsedRequest {
  RgbImage image;  // resized to tile-friendly dimensions
  ChannelModel channel = ChannelModel::kAwgn;
  std::vector<System> systems;
  std::uint64_t seed = 0;
};

json parse_json(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw HttpError(400, std::string("request body is not valid JSON: ") + e.what());
  }
}

double parse_snr_field(const json& v) {
  try {
    if (v.is_number()) {
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw std::invalid_argument("non-finite");
      return d;
    }
    if (v.is_string()) return parse_snr_db(v.get<std::string>());
  } catch (const std::exception& e) {
    throw HttpError(400, std::string("invalid snr_db: ") + e.what());
  }
  throw HttpError(400, "snr_db must be a number or \"inf\"");
}

std::uint64_t fresh_seed() {
  std::random_device rd;
  const std::uint64_t hi = rd(), lo = rd();
  // Keep within 2^53 so JavaScript clients can echo it back exactly.
  return ((hi << 32) | lo) & ((std::uint64_t{1} << 53) - 1);
}

ParsedRequest parse_common(const json& req, bool available_dnn) {
  if (!req.is_object()) throw HttpError(400, "request body must be a JSON object");
  ParsedRequest out;

  if (!req.contains("image") || !req["image"].is_string()) throw HttpError(400, "missing field: image (base64 PNG)");
  std::vector<std::uint8_t> png;
  try {
    png = base64_decode(req["image"].get<std::string>());
  } catch (const std::exception& e) {
    throw HttpError(400, std::string("image is not valid base64: ") + e.what());
  }
  RgbImage raw;
  try {
    raw = decode_png(png);
  } catch (const ImageDecodeError& e) {
    throw HttpError(400, e.what());
  }
  if (raw.width > kMaxUploadSide || raw.height > kMaxUploadSide) {
    throw HttpError(413, "image larger than " + std::to_string(kMaxUploadSide) + " pixels per side");
  }
  const auto [w, h] = tile_friendly_size(raw.width, raw.height, kMaxProcessedSide);
  out.image = resize_bilinear(raw, w, h);

  const std::string channel = req.value("channel", std::string("awgn"));
  try {
    out.channel = parse_channel_model(channel);
  } catch (const std::invalid_argument& e) {
    throw HttpError(400, e.what());
  }

  if (req.contains("systems")) {
    if (!req["systems"].is_array()) throw HttpError(400, "systems must be an array");
    for (const auto& s : req["systems"]) {
      if (!s.is_string()) throw HttpError(400, "systems entries must be strings");
      try {
        const System sys = parse_system(s.get<std::string>());
        if (std::find(out.systems.begin(), out.systems.end(), sys) == out.systems.end()) out.systems.push_back(sys);
      } catch (const std::invalid_argument& e) {
        throw HttpError(400, e.what());
      }
    }
  } else {
    if (available_dnn) out.systems.push_back(System::kDnn);
    out.systems.push_back(System::kQam256);
  }
  if (out.systems.empty()) throw HttpError(400, "systems must not be empty");
  if (!available_dnn && std::find(out.systems.begin(), out.systems.end(), System::kDnn) != out.systems.end()) {
    throw HttpError(400, "dnn system unavailable: no checkpoint loaded");
  }

  if (req.contains("seed") && !req["seed"].is_null()) {
    const auto& s = req["seed"];
    if (s.is_number_unsigned()) {
      out.seed = s.get<std::uint64_t>();
    } else if (s.is_string()) {
      try {
        std::size_t used = 0;
        out.seed = std::stoull(s.get<std::string>(), &used);
        if (used != s.get<std::string>().size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw HttpError(400, "seed must be an unsigned integer");
      }
    } else {
      throw HttpError(400, "seed must be an unsigned integer");
    }
  } else {
    out.seed = fresh_seed();
  }
  return out;
}

ServiceReply guarded(const std::function<json()>& fn) {
  try {
    return {200, fn()};
  } catch (const HttpError& e) {
    return {e.status(), json{{"error", e.what()}}};
  } catch (const std::exception& e) {
    return {500, json{{"error", std::string("internal error: ") + e.what()}}};
  }
}

}  // namespace

DemoService::DemoService(std::shared_ptr<const DnnLink> dnn, std::string checkpoint_id)
    : dnn_(std::move(dnn)), checkpoint_id_(std::move(checkpoint_id)) {}

ServiceReply DemoService::transmit(std::string_view request_body) const {
  return guarded([&]() {
    const auto started = std::chrono::steady_clock::now();
    const json req = parse_json(request_body);
    const ParsedRequest p = parse_common(req, dnn_ != nullptr);
    if (!req.contains("snr_db")) throw HttpError(400, "missing field: snr_db");
    const double snr = parse_snr_field(req["snr_db"]);

    json systems = json::object();
    for (System sys : p.systems) {
      const RgbImage rec = transmit_raster(sys, dnn_.get(), p.image, p.channel, snr, p.seed);
      const MetricReport m = measure_raster(p.image, rec);
      systems[std::string(to_string(sys))] = {
          {"reconstruction", base64_encode(encode_png(rec))},
          {"ssim", m.ssim},
          {"psnr_db", number_or_inf(m.psnr_db)},
      };
    }
    const double elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return json{
        {"seed", p.seed},
        {"channel", to_string(p.channel)},
        {"snr_db", number_or_inf(snr)},
        {"width", p.image.width},
        {"height", p.image.height},
        {"tiles", (p.image.width / 32) * (p.image.height / 32)},
        {"original_processed", base64_encode(encode_png(p.image))},
        {"systems", systems},
        {"timing_ms", elapsed},
    };
  });
}

ServiceReply DemoService::sweep(std::string_view request_body) const {
  return guarded([&]() {
    const json req = parse_json(request_body);
    const ParsedRequest p = parse_common(req, dnn_ != nullptr);
    if (!req.contains("grid") || !req["grid"].is_array()) throw HttpError(400, "missing field: grid (array of SNRs)");
    const auto& grid_json = req["grid"];
    if (grid_json.empty()) throw HttpError(400, "grid must not be empty");
    if (grid_json.size() > kMaxSweepPoints) {
      throw HttpError(400, "grid has " + std::to_string(grid_json.size()) + " points; at most " +
                               std::to_string(kMaxSweepPoints) + " allowed");
    }
    std::vector<double> grid;
    for (const auto& g : grid_json) grid.push_back(parse_snr_field(g));
    const int repeats = req.value("repeats", 1);
    if (repeats < 1 || repeats > kMaxSweepRepeats) {
      throw HttpError(400, "repeats must lie in [1, " + std::to_string(kMaxSweepRepeats) + "]");
    }

    json points = json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
      json ssim_by = json::object();
      json psnr_by = json::object();
      for (System sys : p.systems) {
        double s = 0.0, q = 0.0;
        for (int r = 0; r < repeats; ++r) {
          const std::uint64_t seed = derive_seed(p.seed, {k, static_cast<std::uint64_t>(r)});
          const RgbImage rec = transmit_raster(sys, dnn_.get(), p.image, p.channel, grid[k], seed);
          const MetricReport m = measure_raster(p.image, rec);
          s += m.ssim;
          q += m.psnr_db;
        }
        ssim_by[std::string(to_string(sys))] = s / repeats;
        psnr_by[std::string(to_string(sys))] = number_or_inf(q / repeats);
      }
      points.push_back({{"snr_db", number_or_inf(grid[k])}, {"ssim", ssim_by}, {"psnr_db", psnr_by}});
    }
    return json{{"seed", p.seed},   {"channel", to_string(p.channel)}, {"repeats", repeats},
                {"width", p.image.width}, {"height", p.image.height},   {"points", points}};
  });
}

json DemoService::info() const {
  json systems = json::array();
  if (dnn_) systems.push_back("dnn");
  systems.push_back("qam256");
  json out{
      {"checkpoint_id", checkpoint_id_},
      {"channels", {"awgn", "rayleigh"}},
      {"systems", systems},
      {"snr_db", {{"min", 0}, {"max", 40}, {"noiseless", "inf"}}},
      {"tile_size", 32},
      {"max_side", kMaxProcessedSide},
      {"max_sweep_points", kMaxSweepPoints},
  };
  if (dnn_) {
    const auto& c = dnn_->config();
    out["config"] = {{"patch_size", c.patch_size},
                     {"embed_dim", c.embed_dim},
                     {"depth", c.depth},
                     {"heads", c.heads},
                     {"mlp_ratio", c.mlp_ratio},
                     {"encoder_width", c.encoder_width},
                     {"encoder_bottleneck", c.encoder_bottleneck},
                     {"encoder_blocks", c.encoder_blocks},
                     {"dae_widths", {c.dae_widths[0], c.dae_widths[1]}}};
    out["param_count"] = param_count(c);
  } else {
    out["config"] = nullptr;
    out["param_count"] = 0;
  }
  return out;
}

void DemoService::mount(httplib::Server& server, const std::optional<std::filesystem::path>& ui_dir) const {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.set_payload_max_length(kMaxRequestBytes);
  auto reply = [](httplib::Response& res, const ServiceReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/api/info", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, {200, info()}); });
  server.Post("/api/transmit", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, transmit(req.body));
  });
  server.Post("/api/sweep", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, sweep(req.body));
  });
  if (ui_dir) {
    if (!server.set_mount_point("/", ui_dir->string())) {
      throw std::runtime_error("UI directory not found: " + ui_dir->string());
    }
  }
}

std::string checkpoint_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace semlink
