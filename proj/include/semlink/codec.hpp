#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semlink/dataset.hpp"
#include "semlink/nn.hpp"

namespace semlink {

// Architecture hyperparameters. Defaults land the whole system at ~0.80M
// trainable values.
struct CodecConfig {
  int patch_size = 4;
  int embed_dim = 128;
  int depth = 3;
  int heads = 4;
  int mlp_ratio = 4;
  int encoder_width = 32;
  int encoder_bottleneck = 16;
  int encoder_blocks = 4;
  std::array<int, 2> dae_widths{48, 96};

  bool operator==(const CodecConfig&) const = default;

  // Throws std::invalid_argument on non-divisible or non-positive dims.
  void validate() const;

  int patches_per_side() const { return 32 / patch_size; }
  int tokens() const { return patches_per_side() * patches_per_side(); }
  int patch_dim() const { return patch_size * patch_size * 3; }

  // Canonical "key=value\n" text (fixed key order), used in checkpoints.
  std::string to_text() const;
  static CodecConfig from_text(std::string_view text);

  static CodecConfig tiny();  // d=8, L=1, heads=2, small conv widths
};

struct TensorSpec {
  std::string name;
  std::vector<int> shape;

  std::size_t numel() const;
};

// Every trainable tensor, in canonical order. Names and shapes are fully
// determined by the config.
std::vector<TensorSpec> param_layout(const CodecConfig& cfg);
std::size_t param_count(const CodecConfig& cfg);

// Parameter storage is allocated at Eigen's packet alignment. Vectorized
// reductions over unaligned maps peel a data-dependent head, which would make
// the summation order (and so training) depend on heap addresses.
template <class T>
using TensorData = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  TensorData<T> data;
};

template <class T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(const std::vector<TensorSpec>& layout);

  std::size_t size() const { return tensors_.size(); }
  NamedTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t index_of(std::string_view name) const;
  NamedTensor<T>& at(std::string_view name) { return tensors_[index_of(name)]; }
  const NamedTensor<T>& at(std::string_view name) const { return tensors_[index_of(name)]; }
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  std::size_t total_elements() const;
  void zero();

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors_) {
      out.push_back({t.name, t.shape, TensorData<U>(t.data.begin(), t.data.end())});
    }
    return out;
  }

  void push_back(NamedTensor<T> t);

  bool operator==(const ParamSet& o) const;

 private:
  std::vector<NamedTensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Weights ~ U(-a, a) with a = sqrt(3 / fan_in) (unit-variance-preserving);
// positional embedding ~ U(-0.02, 0.02); biases 0; layer-norm scale 1.
ParamSet<float> init_params(const CodecConfig& cfg, std::uint64_t seed);

// Images and symbols travel as (B*32*32) x 3 row-major matrices in HWC order.
template <class T>
struct EncoderCache {
  nn::Mat<T> input;
  nn::Mat<T> lifted;
  std::vector<nn::Mat<T>> block_in;
  std::vector<nn::Mat<T>> reduced;  // post-ReLU
  std::vector<nn::Mat<T>> spatial;  // post-ReLU
  nn::Mat<T> last;                  // input to the projection
  int batch = 0;
};

template <class T>
struct TransformerLayerCache {
  nn::Mat<T> in;
  nn::LayerNormCache<T> ln1;
  nn::Mat<T> ln1_out;
  nn::AttentionCache<T> attn;
  nn::Mat<T> attn_out;  // concatenated heads, before the output projection
  nn::Mat<T> mid;
  nn::LayerNormCache<T> ln2;
  nn::Mat<T> ln2_out;
  nn::Mat<T> fc1_out;  // pre-GELU
  nn::Mat<T> gelu_out;
};

template <class T>
struct DecoderCache {
  int batch = 0;
  nn::Mat<T> tokens_in;  // patchified symbols, (B*T) x patch_dim
  std::vector<TransformerLayerCache<T>> layers;
  nn::Mat<T> final_in;
  nn::LayerNormCache<T> final_ln;
  nn::Mat<T> x0;  // ViT features, (B*T) x d
  nn::Mat<T> dae_in;
  nn::Mat<T> d1, d2, d3, up, d4;  // post-ReLU conv activations
};

// Forward/backward for the encoder and the ViT + DAE decoder with the linear
// shortcut: s_hat = unpatchify(x0 W) + F_dae(x0).
template <class T>
class Codec {
 public:
  explicit Codec(const CodecConfig& cfg);

  const CodecConfig& config() const { return cfg_; }

  nn::Mat<T> encode(const nn::Mat<T>& images, const ParamSet<T>& p, EncoderCache<T>* cache = nullptr) const;
  nn::Mat<T> decode(const nn::Mat<T>& symbols, const ParamSet<T>& p, DecoderCache<T>* cache = nullptr) const;

  // x0 only; (B*T) x d.
  nn::Mat<T> vit_features(const nn::Mat<T>& symbols, const ParamSet<T>& p) const;

  // Accumulate parameter gradients into `grads`.
  void encode_backward(const nn::Mat<T>& d_symbols, const ParamSet<T>& p, ParamSet<T>& grads,
                       const EncoderCache<T>& cache) const;
  // Returns d(symbols).
  nn::Mat<T> decode_backward(const nn::Mat<T>& d_images, const ParamSet<T>& p, ParamSet<T>& grads,
                             const DecoderCache<T>& cache) const;

  nn::Mat<T> patchify(const nn::Mat<T>& images, int batch) const;
  nn::Mat<T> unpatchify(const nn::Mat<T>& tokens, int batch) const;

 private:
  struct ConvIds {
    std::size_t w, b;
  };
  struct LayerIds {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  nn::Mat<T> vit_forward(const nn::Mat<T>& symbols, const ParamSet<T>& p, DecoderCache<T>& cache) const;

  static nn::WeightRef<T> weight(const ParamSet<T>& p, ParamSet<T>* g, std::size_t id);
  static nn::BiasRef<T> bias(const ParamSet<T>& p, ParamSet<T>* g, std::size_t id);

  nn::ConvGeometry geom(int batch, int side, int cin, int cout, int kernel, int stride = 1) const;

  CodecConfig cfg_;
  ConvIds enc_lift_{}, enc_proj_{};
  std::vector<std::array<ConvIds, 3>> enc_blocks_;
  std::size_t patch_w_{}, patch_b_{}, pos_{};
  std::vector<LayerIds> layers_;
  std::size_t norm_g_{}, norm_b_{}, shortcut_w_{};
  ConvIds dae_unpatch_{};
  std::array<ConvIds, 5> dae_convs_{};
};

extern template class ParamSet<float>;
extern template class ParamSet<double>;
extern template class Codec<float>;
extern template class Codec<double>;

// Image batch helpers: HWC images <-> (B*1024) x 3 matrices.
nn::Mat<float> stack_images(std::span<const ImageF> images);
// Clamps to [0, 1] (evaluation-time output convention).
std::vector<ImageF> unstack_images(const nn::Mat<float>& batch);

}  // namespace semlink
