#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "semlink/codec.hpp"
#include "semlink/rng.hpp"

namespace semlink {

// Checkpoint file layout (all integers little-endian):
//
//   "SMCK"                       magic, 4 bytes
//   u32 version                  kCheckpointVersion
//   u32 len + bytes              CodecConfig::to_text()
//   section x3                   parameters, optimizer, state
//
// Each section is a u32 entry count followed by entries:
//
//   u16 name_len + UTF-8 name
//   u8 rank, then rank x u32 dims
//   u8 dtype (0 = f32, 1 = u64, 2 = f64)
//   raw little-endian payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct EpochRecord {
  int phase = 0;  // 0 or 1
  int epoch = 0;  // within the phase
  double mean_loss = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainProgress {
  int phase = 0;             // current phase; 2 once training is complete
  int epoch = 0;             // completed epochs within the current phase
  std::uint64_t adam_t = 0;  // optimizer step count within the phase

  bool operator==(const TrainProgress&) const = default;
};

struct Checkpoint {
  CodecConfig config;
  ParamSet<float> params;
  ParamSet<float> adam_m;
  ParamSet<float> adam_v;
  TrainProgress progress;
  std::uint64_t run_seed = 0;
  Rng::State rng_state{};
  bool rng_has_spare = false;
  double rng_spare = 0.0;
  std::vector<EpochRecord> history;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// Atomic: writes "<path>.tmp" then renames over path.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Rejects a checkpoint whose config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const CodecConfig& expected);

// A checkpoint carrying only weights (fresh optimizer/progress).
Checkpoint make_weights_checkpoint(const CodecConfig& cfg, ParamSet<float> params);

}  // namespace semlink
