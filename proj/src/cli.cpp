#include "semlink/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <memory>
#include <optional>
#include <stdexcept>

#include "semlink/checkpoint.hpp"
#include "semlink/harness.hpp"
#include "semlink/image_io.hpp"
#include "semlink/metrics.hpp"
#include "semlink/service.hpp"
#include "semlink/training.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a `_res` macro.
#include <httplib.h>

namespace semlink {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(',', pos);
    std::string item = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& flag, const std::string& text, Parse parse) {
  std::vector<T> out;
  try {
    for (const auto& item : split_list(text)) {
      const T v = parse(item);
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(flag + ": " + e.what());
  }
  if (out.empty()) throw UsageError(flag + " must not be empty");
  return out;
}

std::vector<double> grid_flag(const std::string& text) {
  try {
    return parse_snr_grid(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--snr-grid: ") + e.what());
  }
}

double snr_flag(const std::string& text) {
  try {
    return parse_snr_db(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--snr: ") + e.what());
  }
}

std::shared_ptr<DnnLink> load_dnn(const std::string& ckpt) {
  Checkpoint c = load_checkpoint(ckpt);
  return std::make_shared<DnnLink>(c.config, std::move(c.params));
}

std::shared_ptr<DnnLink> load_dnn_if_needed(const std::vector<System>& systems, const std::string& ckpt) {
  const bool need = std::find(systems.begin(), systems.end(), System::kDnn) != systems.end();
  if (!need) return nullptr;
  if (ckpt.empty()) throw UsageError("--ckpt is required when systems include dnn");
  return load_dnn(ckpt);
}

RgbImage tile_ready(const RgbImage& img) {
  const auto [w, h] = tile_friendly_size(img.width, img.height, kMaxProcessedSide);
  if (w == img.width && h == img.height) return img;
  return resize_bilinear(img, w, h);
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string profile = "full";
  std::optional<int> batch;
  std::optional<double> lr;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::optional<int> phase1_epochs;
  std::optional<int> phase2_epochs;
  std::optional<std::size_t> max_images;
  double h_floor = kDefaultGainFloor;
  int checkpoint_every = 1;
  bool resume = false;
  std::string arch = "default";
  std::optional<int> embed_dim;
  std::optional<int> depth;
  std::optional<int> heads;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::size_t images = 320;
  std::string grid = "0:40:5";
  std::string channels = "awgn,rayleigh";
  std::string systems = "dnn,qam256";
  std::string csv;
  std::uint64_t seed = 0;
  double h_floor = kDefaultGainFloor;
};

struct TransmitArgs {
  std::string in;
  std::string snr;
  std::string channel = "awgn";
  std::string system;
  std::string ckpt;
  std::string out;
  std::uint64_t seed = 0;
  double h_floor = kDefaultGainFloor;
};

struct SweepArgs {
  std::string ckpt;
  std::string in;
  std::string out;
  std::string grid = "0:40:5";
  std::string channel = "awgn";
  std::string systems = "dnn,qam256";
  std::uint64_t seed = 0;
};

struct ServeArgs {
  std::string ckpt;
  int port = 8080;
  std::string bind = "127.0.0.1";
  std::string ui;
};

int do_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainSchedule sched = TrainSchedule::profile(a.profile);
  if (a.batch) sched.batch_size = *a.batch;
  if (a.lr) sched.lr = *a.lr;
  if (a.phase1_epochs) sched.phase1.epochs = *a.phase1_epochs;
  if (a.phase2_epochs) sched.phase2.epochs = *a.phase2_epochs;
  if (a.max_images) sched.max_train_images = *a.max_images;
  sched.seed = a.seed;
  sched.h_floor = a.h_floor;
  sched.deterministic = true;  // the trainer has a single, fixed reduction order

  CodecConfig cfg = a.arch == "tiny" ? CodecConfig::tiny() : CodecConfig{};
  if (a.embed_dim) cfg.embed_dim = *a.embed_dim;
  if (a.depth) cfg.depth = *a.depth;
  if (a.heads) cfg.heads = *a.heads;
  try {
    sched.validate();
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const Dataset ds = load_cifar10(a.data);
  TrainOptions opts;
  opts.checkpoint_path = fs::path(a.out);
  opts.checkpoint_every = a.checkpoint_every;
  if (a.resume && fs::exists(a.out)) {
    opts.resume = load_checkpoint(a.out, cfg);
    err << "resuming from " << a.out << " at phase " << opts.resume->progress.phase + 1 << " epoch "
        << opts.resume->progress.epoch << '\n';
  }
  const auto started = std::chrono::steady_clock::now();
  opts.on_epoch = [&](const EpochRecord& r) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    char buf[160];
    std::snprintf(buf, sizeof buf, "phase %d epoch %d/%d loss %.6g elapsed %.1fs", r.phase + 1, r.epoch + 1,
                  sched.phase(r.phase).epochs, r.mean_loss, s);
    err << buf << std::endl;
  };
  err << "training " << param_count(cfg) << " parameters on "
      << (sched.max_train_images ? std::min(sched.max_train_images, ds.train.size()) : ds.train.size())
      << " images, profile " << a.profile << '\n';
  const TrainResult result = train(ds, cfg, sched, opts);
  save_checkpoint(a.out, result.final_state);
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

int do_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  SweepConfig cfg;
  cfg.snr_grid = grid_flag(a.grid);
  cfg.channels = parse_list<ChannelModel>("--channels", a.channels, parse_channel_model);
  cfg.systems = parse_list<System>("--systems", a.systems, parse_system);
  cfg.n_images = a.images;
  cfg.seed = a.seed;
  cfg.h_floor = a.h_floor;
  if (cfg.n_images == 0) throw UsageError("--images must be positive");
  const auto dnn = load_dnn_if_needed(cfg.systems, a.ckpt);
  const Dataset ds = load_cifar10(a.data);
  const auto records = run_sweep(dnn.get(), ds, cfg);
  write_csv(records, a.csv);
  out << "wrote " << records.size() << " rows to " << a.csv << '\n';
  return kExitOk;
}

int do_transmit(const TransmitArgs& a, std::ostream& out, std::ostream&) {
  const double snr = snr_flag(a.snr);
  ChannelModel channel;
  System system;
  try {
    channel = parse_channel_model(a.channel);
    system = parse_system(a.system);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto dnn = load_dnn_if_needed({system}, a.ckpt);
  const RgbImage img = tile_ready(read_png(a.in));
  const RgbImage rec = transmit_raster(system, dnn.get(), img, channel, snr, a.seed, a.h_floor);
  fs::create_directories(a.out);
  const fs::path path = fs::path(a.out) / (std::string(to_string(system)) + "_" + std::string(to_string(channel)) +
                                           "_" + format_snr_db(snr) + "dB.png");
  write_png(path, rec);
  double ssim_sum = 0.0;
  const auto ta = split_tiles(img), tb = split_tiles(rec);
  for (std::size_t i = 0; i < ta.size(); ++i) ssim_sum += ssim(to_float(ta[i]), to_float(tb[i]));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", ssim_sum / static_cast<double>(ta.size()));
  out << "wrote " << path.string() << " ssim " << buf << '\n';
  return kExitOk;
}

int do_sweep_images(const SweepArgs& a, std::ostream& out, std::ostream&) {
  const auto grid = grid_flag(a.grid);
  const auto systems = parse_list<System>("--systems", a.systems, parse_system);
  ChannelModel channel;
  try {
    channel = parse_channel_model(a.channel);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto dnn = load_dnn_if_needed(systems, a.ckpt);
  RgbImage img = read_png(a.in);
  if (img.width != 32 || img.height != 32) img = resize_bilinear(img, 32, 32);
  const auto files = render_comparison(dnn.get(), to_image32(img), grid, channel, systems, a.seed, a.out);
  out << "wrote " << files.size() << " images and manifest.json to " << a.out << '\n';
  return kExitOk;
}

int do_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  std::shared_ptr<const DnnLink> dnn;
  std::string id = "none";
  if (!a.ckpt.empty()) {
    dnn = load_dnn(a.ckpt);
    id = checkpoint_fingerprint(a.ckpt);
  } else {
    err << "no --ckpt given; serving qam256 only\n";
  }
  const DemoService service(dnn, id);
  httplib::Server server;
  std::optional<fs::path> ui;
  if (!a.ui.empty()) ui = fs::path(a.ui);
  service.mount(server, ui);
  if (!server.bind_to_port(a.bind, a.port)) {
    throw std::runtime_error("cannot bind " + a.bind + ":" + std::to_string(a.port));
  }
  out << "listening on http://" << a.bind << ':' << a.port << std::endl;
  if (!server.listen_after_bind()) throw std::runtime_error("server stopped unexpectedly");
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulated image link: learned codec vs. 256-QAM over AWGN and Rayleigh channels", "semlink"};
  app.set_config("--config", "", "INI/TOML file supplying flag values; keys go in a [subcommand] section");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the codec with the two-phase schedule");
  train_cmd->add_option("--data", ta.data, "CIFAR-10 binary directory")->envname("SEMLINK_DATA")->required();
  train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
  train_cmd->add_option("--profile", ta.profile, "Schedule: full (150+150), desk (20+20), tiny (10+10, 5k images)")
      ->check(CLI::IsMember({"full", "desk", "tiny"}))
      ->capture_default_str();
  train_cmd->add_option("--batch", ta.batch, "Batch size (default 128)");
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate (default 0.002)");
  train_cmd->add_option("--seed", ta.seed, "Run seed")->capture_default_str();
  train_cmd->add_flag("--deterministic", ta.deterministic, "Fixed reduction order (always on)");
  train_cmd->add_option("--phase1-epochs", ta.phase1_epochs, "Override phase-1 epochs");
  train_cmd->add_option("--phase2-epochs", ta.phase2_epochs, "Override phase-2 epochs");
  train_cmd->add_option("--max-images", ta.max_images, "Cap on training images (0 = all)");
  train_cmd->add_option("--h-floor", ta.h_floor, "Rayleigh gain floor")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "Save every N epochs (0 = phase ends only)")
      ->capture_default_str();
  train_cmd->add_flag("--resume", ta.resume, "Continue from --out if it exists");
  train_cmd->add_option("--arch", ta.arch, "Architecture preset")
      ->check(CLI::IsMember({"default", "tiny"}))
      ->capture_default_str();
  train_cmd->add_option("--embed-dim", ta.embed_dim, "Transformer width");
  train_cmd->add_option("--depth", ta.depth, "Transformer layers");
  train_cmd->add_option("--heads", ta.heads, "Attention heads");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Sweep SNR for both systems and write a CSV");
  eval_cmd->add_option("--ckpt", ea.ckpt, "Checkpoint (required for dnn)");
  eval_cmd->add_option("--data", ea.data, "CIFAR-10 binary directory")->envname("SEMLINK_DATA")->required();
  eval_cmd->add_option("--images", ea.images, "Test images per cell")->capture_default_str();
  eval_cmd->add_option("--snr-grid", ea.grid, "start:stop:step or comma list (inf allowed)")->capture_default_str();
  eval_cmd->add_option("--channels", ea.channels, "Comma list of awgn,rayleigh")->capture_default_str();
  eval_cmd->add_option("--systems", ea.systems, "Comma list of dnn,qam256")->capture_default_str();
  eval_cmd->add_option("--csv", ea.csv, "Output CSV")->required();
  eval_cmd->add_option("--seed", ea.seed, "Sweep seed")->capture_default_str();
  eval_cmd->add_option("--h-floor", ea.h_floor, "Rayleigh gain floor")->capture_default_str();

  TransmitArgs xa;
  auto* tx_cmd = app.add_subcommand("transmit", "Send one PNG through a system and save the reconstruction");
  tx_cmd->add_option("--in", xa.in, "Input PNG")->required();
  tx_cmd->add_option("--snr", xa.snr, "SNR in dB or inf")->required();
  tx_cmd->add_option("--channel", xa.channel, "awgn or rayleigh")->capture_default_str();
  tx_cmd->add_option("--system", xa.system, "dnn or qam256")->required();
  tx_cmd->add_option("--ckpt", xa.ckpt, "Checkpoint (required for dnn)");
  tx_cmd->add_option("--out", xa.out, "Output directory")->required();
  tx_cmd->add_option("--seed", xa.seed, "Channel seed")->capture_default_str();
  tx_cmd->add_option("--h-floor", xa.h_floor, "Rayleigh gain floor")->capture_default_str();

  SweepArgs sa;
  auto* sweep_cmd = app.add_subcommand("sweep-images", "Render one 32x32 image at every SNR for side-by-side viewing");
  sweep_cmd->add_option("--ckpt", sa.ckpt, "Checkpoint (required for dnn)");
  sweep_cmd->add_option("--in", sa.in, "Input PNG (resized to 32x32)")->required();
  sweep_cmd->add_option("--out", sa.out, "Output directory")->required();
  sweep_cmd->add_option("--snr-grid", sa.grid, "start:stop:step or comma list")->capture_default_str();
  sweep_cmd->add_option("--channel", sa.channel, "awgn or rayleigh")->capture_default_str();
  sweep_cmd->add_option("--systems", sa.systems, "Comma list of dnn,qam256")->capture_default_str();
  sweep_cmd->add_option("--seed", sa.seed, "Channel seed")->capture_default_str();

  ServeArgs va;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP demo API");
  serve_cmd->add_option("--ckpt", va.ckpt, "Checkpoint (omit to offer qam256 only)");
  serve_cmd->add_option("--port", va.port, "TCP port")->check(CLI::Range(1, 65535))->capture_default_str();
  serve_cmd->add_option("--bind", va.bind, "Listen address")->capture_default_str();
  serve_cmd->add_option("--ui", va.ui, "Directory of static UI files served at /");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return do_train(ta, out, err);
    if (eval_cmd->parsed()) return do_eval(ea, out, err);
    if (tx_cmd->parsed()) return do_transmit(xa, out, err);
    if (sweep_cmd->parsed()) return do_sweep_images(sa, out, err);
    if (serve_cmd->parsed()) return do_serve(va, out, err);
  } catch (const UsageError& e) {
    err << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << "error: usage: no subcommand\n";
  return kExitUsage;
}

}  // namespace semlink
