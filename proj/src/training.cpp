#include "semlink/training.hpp"

#include <cmath>
#include <numeric>

#include "semlink/rng.hpp"

namespace semlink {

using nn::Mat;

std::string_view to_string(LossKind k) { return k == LossKind::kMse ? "mse" : "mae"; }

void TrainSchedule::validate() const {
  if (phase1.epochs < 0 || phase2.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam epsilon must be > 0");
}

TrainSchedule TrainSchedule::profile(std::string_view name) {
  TrainSchedule s;
  if (name == "full") {
    s.phase1.epochs = 150;
    s.phase2.epochs = 150;
  } else if (name == "desk") {
    s.phase1.epochs = 20;
    s.phase2.epochs = 20;
  } else if (name == "tiny") {
    s.phase1.epochs = 10;
    s.phase2.epochs = 10;
    s.max_train_images = 5000;
  } else {
    throw std::invalid_argument("unknown profile '" + std::string(name) + "' (expected full|desk|tiny)");
  }
  return s;
}

// ------------------------------------------------------------------ loss

double loss(std::span<const float> pred, std::span<const float> target, LossKind kind) {
  if (pred.size() != target.size() || pred.empty()) throw std::invalid_argument("loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += kind == LossKind::kMse ? d * d : std::abs(d);
  }
  return acc / static_cast<double>(pred.size());
}

double loss_with_grad(std::span<const float> pred, std::span<const float> target, LossKind kind,
                      std::span<float> grad) {
  if (grad.size() != pred.size()) throw std::invalid_argument("loss: gradient shape mismatch");
  const double value = loss(pred, target, kind);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    double g;
    if (kind == LossKind::kMse) {
      g = 2.0 * d * inv_n;
    } else {
      g = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
    }
    grad[i] = static_cast<float>(g);
  }
  return value;
}

// ------------------------------------------------------------------ Adam

AdamState AdamState::zeros_like(const ParamSet<float>& params) {
  AdamState s;
  s.m = params;
  s.m.zero();
  s.v = s.m;
  return s;
}

void adam_step(ParamSet<float>& params, const ParamSet<float>& grads, AdamState& state, const AdamHyper& h) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: tensor map mismatch");
  }
  for (const auto& g : grads) {
    for (float v : g.data) {
      if (!std::isfinite(v)) throw NonFiniteError("non-finite gradient in tensor " + g.name);
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  const float b1 = static_cast<float>(h.beta1), b2 = static_cast<float>(h.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].data;
    const auto& g = grads[k].data;
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / bc1;
      const double v_hat = static_cast<double>(v[i]) / bc2;
      p[i] = static_cast<float>(static_cast<double>(p[i]) - h.lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
  }
}

// ------------------------------------------------------------------ step

StepResult train_step(const Codec<float>& codec, ParamSet<float>& params, AdamState& adam,
                      std::span<const ImageF> batch, std::span<const std::uint64_t> channel_seeds,
                      const PhaseSpec& phase, const TrainSchedule& sched) {
  if (channel_seeds.size() != batch.size()) throw std::invalid_argument("train_step: one channel seed per image");
  const Mat<float> images = stack_images(batch);

  EncoderCache<float> enc_cache;
  DecoderCache<float> dec_cache;
  const Mat<float> symbols = codec.encode(images, params, &enc_cache);
  Mat<float> received(symbols.rows(), symbols.cols());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const ChannelSpec spec{sched.channel, phase.snr_db, channel_seeds[n], sched.h_floor};
    channel_pass_training(std::span<const float>(symbols.data() + n * kImageElems, kImageElems), spec,
                          std::span<float>(received.data() + n * kImageElems, kImageElems));
  }
  const Mat<float> out = codec.decode(received, params, &dec_cache);

  Mat<float> d_out(out.rows(), out.cols());
  StepResult r;
  r.loss = loss_with_grad(std::span<const float>(out.data(), static_cast<std::size_t>(out.size())),
                          std::span<const float>(images.data(), static_cast<std::size_t>(images.size())), phase.loss,
                          std::span<float>(d_out.data(), static_cast<std::size_t>(d_out.size())));

  ParamSet<float> grads = params;
  grads.zero();
  // The channel composite has unit Jacobian, so d(symbols) = d(received).
  const Mat<float> d_symbols = codec.decode_backward(d_out, params, grads, dec_cache);
  codec.encode_backward(d_symbols, params, grads, enc_cache);

  adam_step(params, grads, adam, {sched.lr, sched.adam_beta1, sched.adam_beta2, sched.adam_eps});
  return r;
}

// ------------------------------------------------------------------ loop

namespace {

Checkpoint snapshot(const CodecConfig& cfg, const ParamSet<float>& params, const AdamState& adam,
                    const TrainProgress& progress, const TrainSchedule& sched, const Rng& rng,
                    const std::vector<EpochRecord>& history) {
  Checkpoint ck;
  ck.config = cfg;
  ck.params = params;
  ck.adam_m = adam.m;
  ck.adam_v = adam.v;
  ck.progress = progress;
  ck.run_seed = sched.seed;
  ck.rng_state = rng.state();
  ck.rng_has_spare = rng.has_spare();
  ck.rng_spare = rng.spare();
  ck.history = history;
  return ck;
}

}  // namespace

TrainResult train(const Dataset& ds, const CodecConfig& cfg, const TrainSchedule& sched, const TrainOptions& opts) {
  sched.validate();
  cfg.validate();
  const std::size_t n_train =
      sched.max_train_images == 0 ? ds.train.size() : std::min(sched.max_train_images, ds.train.size());
  if (n_train == 0) throw std::invalid_argument("train: empty training split");

  const Codec<float> codec(cfg);
  ParamSet<float> params;
  AdamState adam;
  TrainProgress progress;
  std::vector<EpochRecord> history;
  Rng rng(derive_seed(sched.seed, {0x7472616996ULL}));

  if (opts.resume) {
    const Checkpoint& ck = *opts.resume;
    if (!(ck.config == cfg)) throw CheckpointError("resume checkpoint was written for a different codec config");
    if (ck.run_seed != sched.seed) throw CheckpointError("resume checkpoint was written for a different run seed");
    params = ck.params;
    adam.m = ck.adam_m.size() ? ck.adam_m : AdamState::zeros_like(params).m;
    adam.v = ck.adam_v.size() ? ck.adam_v : AdamState::zeros_like(params).v;
    adam.t = ck.progress.adam_t;
    progress = ck.progress;
    history = ck.history;
    rng.restore(ck.rng_state, ck.rng_has_spare, ck.rng_spare);
  } else {
    params = init_params(cfg, derive_seed(sched.seed, {0x696e6974ULL}));
    adam = AdamState::zeros_like(params);
  }

  auto save = [&]() {
    if (opts.checkpoint_path) save_checkpoint(*opts.checkpoint_path, snapshot(cfg, params, adam, progress, sched, rng, history));
  };

  std::vector<std::size_t> order(n_train);
  std::vector<ImageF> batch;
  std::vector<std::uint64_t> seeds;
  std::uint64_t total_steps = 0;
  bool capped = false;

  while (progress.phase < 2 && !capped) {
    const PhaseSpec& phase = sched.phase(progress.phase);
    while (progress.epoch < phase.epochs && !capped) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

      double loss_sum = 0.0;
      std::size_t loss_images = 0;
      for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(sched.batch_size)) {
        const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(sched.batch_size));
        batch.clear();
        seeds.clear();
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(to_float(ds.train[order[i]]));
          seeds.push_back(rng.next_u64());
        }
        const auto r = train_step(codec, params, adam, batch, seeds, phase, sched);
        loss_sum += r.loss * static_cast<double>(batch.size());
        loss_images += batch.size();
        ++total_steps;
        if (opts.max_steps != 0 && total_steps >= opts.max_steps) {
          capped = true;
          break;
        }
      }
      const EpochRecord rec{progress.phase, progress.epoch, loss_sum / static_cast<double>(loss_images)};
      history.push_back(rec);
      if (opts.on_epoch) opts.on_epoch(rec);
      if (capped) break;
      ++progress.epoch;
      progress.adam_t = adam.t;
      if (opts.checkpoint_every > 0 && progress.epoch % opts.checkpoint_every == 0 && progress.epoch < phase.epochs) {
        save();
      }
    }
    if (capped) break;
    // Phase boundary: fresh optimizer moments for the fine-tuning phase.
    ++progress.phase;
    progress.epoch = 0;
    adam = AdamState::zeros_like(params);
    progress.adam_t = 0;
    save();
  }

  progress.adam_t = adam.t;
  TrainResult result;
  result.final_state = snapshot(cfg, params, adam, progress, sched, rng, history);
  result.params = std::move(params);
  result.history = std::move(history);
  return result;
}

}  // namespace semlink
