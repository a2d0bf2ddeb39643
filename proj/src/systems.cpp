#include "semlink/systems.hpp"

#include <stdexcept>
#include <string>

#include "semlink/qam.hpp"
#include "semlink/rng.hpp"

namespace semlink {

std::string_view to_string(System s) { return s == System::kDnn ? "dnn" : "qam256"; }

System parse_system(std::string_view s) {
  if (s == "dnn") return System::kDnn;
  if (s == "qam256") return System::kQam256;
  throw std::invalid_argument("unknown system '" + std::string(s) + "' (expected dnn|qam256)");
}

DnnLink::DnnLink(CodecConfig cfg, ParamSet<float> params) : codec_(cfg), params_(std::move(params)) {
  const auto layout = param_layout(cfg);
  if (layout.size() != params_.size()) throw std::invalid_argument("DnnLink: parameters do not match the config");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != params_[i].name || layout[i].shape != params_[i].shape) {
      throw std::invalid_argument("DnnLink: tensor " + layout[i].name + " does not match the config");
    }
  }
}

std::vector<ImageF> DnnLink::transmit(std::span<const ImageF> images, std::span<const ChannelSpec> specs,
                                      std::size_t batch) const {
  if (images.size() != specs.size()) throw std::invalid_argument("DnnLink::transmit: one channel spec per image");
  std::vector<ImageF> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch) {
    const std::size_t n = std::min(batch, images.size() - start);
    const auto symbols = codec_.encode(stack_images(images.subspan(start, n)), params_);
    nn::Mat<float> received(symbols.rows(), symbols.cols());
    std::vector<double> raw(kImageElems);
    for (std::size_t i = 0; i < n; ++i) {
      const float* src = symbols.data() + i * kImageElems;
      for (std::size_t k = 0; k < kImageElems; ++k) raw[k] = src[k];
      const SymbolBlock block = normalize_power(raw);
      const auto rx = apply_channel(block, specs[start + i]);
      const auto eq = equalize(rx, block.power_coeff);
      float* dst = received.data() + i * kImageElems;
      for (std::size_t k = 0; k < kImageElems; ++k) dst[k] = static_cast<float>(eq[k]);
    }
    auto decoded = unstack_images(codec_.decode(received, params_));
    for (auto& img : decoded) out.push_back(img);
  }
  return out;
}

ImageF transmit_one(System system, const DnnLink* dnn, const ImageU8& img, const ChannelSpec& spec) {
  if (system == System::kQam256) return to_float(qam::transmit_qam(img, spec));
  if (!dnn) throw std::invalid_argument("the dnn system needs a loaded checkpoint");
  const ImageF f = to_float(img);
  return dnn->transmit(std::span<const ImageF>(&f, 1), std::span<const ChannelSpec>(&spec, 1)).front();
}

RgbImage transmit_raster(System system, const DnnLink* dnn, const RgbImage& img, ChannelModel channel, double snr_db,
                         std::uint64_t seed, double h_floor) {
  const auto tiles = split_tiles(img);
  std::vector<ChannelSpec> specs;
  specs.reserve(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    specs.push_back({channel, snr_db, derive_seed(seed, {static_cast<std::uint64_t>(system), i}), h_floor});
  }
  std::vector<ImageU8> out_tiles(tiles.size());
  if (system == System::kQam256) {
    for (std::size_t i = 0; i < tiles.size(); ++i) out_tiles[i] = qam::transmit_qam(tiles[i], specs[i]);
  } else {
    if (!dnn) throw std::invalid_argument("the dnn system needs a loaded checkpoint");
    std::vector<ImageF> in(tiles.size());
    for (std::size_t i = 0; i < tiles.size(); ++i) in[i] = to_float(tiles[i]);
    const auto rec = dnn->transmit(in, specs);
    for (std::size_t i = 0; i < tiles.size(); ++i) out_tiles[i] = to_bytes(rec[i]);
  }
  return join_tiles(out_tiles, img.width, img.height);
}

}  // namespace semlink
