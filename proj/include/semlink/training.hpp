#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/checkpoint.hpp"
#include "semlink/codec.hpp"
#include "semlink/dataset.hpp"

namespace semlink {

enum class LossKind { kMse, kMae };

std::string_view to_string(LossKind k);

struct PhaseSpec {
  int epochs = 150;
  double snr_db = 35.0;
  LossKind loss = LossKind::kMse;
};

struct TrainSchedule {
  PhaseSpec phase1{150, 35.0, LossKind::kMse};
  PhaseSpec phase2{150, 15.0, LossKind::kMae};
  int batch_size = 128;
  double lr = 0.002;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  ChannelModel channel = ChannelModel::kRayleigh;
  double h_floor = kDefaultGainFloor;
  std::uint64_t seed = 0;
  // 0 = every training image.
  std::size_t max_train_images = 0;
  bool deterministic = true;

  void validate() const;
  const PhaseSpec& phase(int i) const { return i == 0 ? phase1 : phase2; }

  // "full": 150+150 epochs on the whole training split.
  // "desk": 20+20 epochs on the whole training split.
  // "tiny": 10+10 epochs on the first 5,000 training images.
  static TrainSchedule profile(std::string_view name);
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean over all elements of (p - t)^2 or |p - t|.
double loss(std::span<const float> pred, std::span<const float> target, LossKind kind);
// Same value; writes dL/dpred into grad.
double loss_with_grad(std::span<const float> pred, std::span<const float> target, LossKind kind,
                      std::span<float> grad);

struct AdamState {
  ParamSet<float> m;
  ParamSet<float> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ParamSet<float>& params);
};

struct AdamHyper {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Throws NonFiniteError naming the first tensor whose
// gradient contains NaN/Inf (parameters are left untouched in that case).
void adam_step(ParamSet<float>& params, const ParamSet<float>& grads, AdamState& state, const AdamHyper& hyper);

struct StepResult {
  double loss = 0.0;
};

// One optimization step: encode -> channel -> decode -> loss -> backward ->
// Adam. `channel_seeds` has one entry per image.
StepResult train_step(const Codec<float>& codec, ParamSet<float>& params, AdamState& adam,
                      std::span<const ImageF> batch, std::span<const std::uint64_t> channel_seeds,
                      const PhaseSpec& phase, const TrainSchedule& sched);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;
  int checkpoint_every = 0;  // epochs; 0 = only at phase ends
  std::optional<Checkpoint> resume;
  // Stop after this many optimizer steps in total (0 = no cap). Used by tests.
  std::uint64_t max_steps = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ParamSet<float> params;
  std::vector<EpochRecord> history;
  Checkpoint final_state;
};

// Two-phase curriculum. Each epoch draws a fresh permutation and fresh
// per-image channel seeds from one run generator; phase 2 starts from the
// phase-1 weights with zeroed optimizer moments.
TrainResult train(const Dataset& ds, const CodecConfig& cfg, const TrainSchedule& sched,
                  const TrainOptions& opts = {});

}  // namespace semlink
