#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/codec.hpp"
#include "semlink/dataset.hpp"
#include "semlink/image_io.hpp"

namespace semlink {

enum class System { kDnn, kQam256 };

std::string_view to_string(System s);
System parse_system(std::string_view s);

// Trained encoder/decoder pair run through the simulated link:
// encode -> normalize_power -> apply_channel -> equalize -> decode -> clamp.
class DnnLink {
 public:
  DnnLink(CodecConfig cfg, ParamSet<float> params);

  const CodecConfig& config() const { return codec_.config(); }
  const ParamSet<float>& params() const { return params_; }

  // One channel spec per image. Images are processed in chunks of
  // `batch` so memory stays bounded.
  std::vector<ImageF> transmit(std::span<const ImageF> images, std::span<const ChannelSpec> specs,
                               std::size_t batch = 64) const;

 private:
  Codec<float> codec_;
  ParamSet<float> params_;
};

// Runs one image through the chosen system. `dnn` may be null for qam256.
ImageF transmit_one(System system, const DnnLink* dnn, const ImageU8& img, const ChannelSpec& spec);

// Tiled transmission of a raster with sides that are multiples of 32. Tile i
// uses the channel seed derive_seed(seed, {system, i}).
RgbImage transmit_raster(System system, const DnnLink* dnn, const RgbImage& img, ChannelModel channel,
                         double snr_db, std::uint64_t seed, double h_floor = kDefaultGainFloor);

}  // namespace semlink
