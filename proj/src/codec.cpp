#include "semlink/codec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "semlink/rng.hpp"

namespace semlink {

using nn::Mat;

// ------------------------------------------------------------------ config

void CodecConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw std::invalid_argument(std::string("codec config: ") + what + " must be positive");
  };
  positive(patch_size, "patch_size");
  positive(embed_dim, "embed_dim");
  positive(depth, "depth");
  positive(heads, "heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(encoder_width, "encoder_width");
  positive(encoder_bottleneck, "encoder_bottleneck");
  if (encoder_blocks < 0) throw std::invalid_argument("codec config: encoder_blocks must be >= 0");
  positive(dae_widths[0], "dae_widths[0]");
  positive(dae_widths[1], "dae_widths[1]");
  if (32 % patch_size != 0) throw std::invalid_argument("codec config: patch_size must divide 32");
  if (embed_dim % heads != 0) throw std::invalid_argument("codec config: embed_dim must be divisible by heads");
}

std::string CodecConfig::to_text() const {
  std::ostringstream os;
  os << "dae_widths=" << dae_widths[0] << ',' << dae_widths[1] << '\n'
     << "depth=" << depth << '\n'
     << "embed_dim=" << embed_dim << '\n'
     << "encoder_blocks=" << encoder_blocks << '\n'
     << "encoder_bottleneck=" << encoder_bottleneck << '\n'
     << "encoder_width=" << encoder_width << '\n'
     << "heads=" << heads << '\n'
     << "mlp_ratio=" << mlp_ratio << '\n'
     << "patch_size=" << patch_size << '\n';
  return os.str();
}

namespace {

int parse_int(std::string_view s, std::string_view key) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("codec config: bad integer for " + std::string(key) + ": '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

CodecConfig CodecConfig::from_text(std::string_view text) {
  CodecConfig cfg;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("codec config: malformed line '" + std::string(line) + "'");
    const auto key = line.substr(0, eq);
    const auto val = line.substr(eq + 1);
    if (key == "dae_widths") {
      const auto comma = val.find(',');
      if (comma == std::string_view::npos) throw std::invalid_argument("codec config: dae_widths needs two values");
      cfg.dae_widths = {parse_int(val.substr(0, comma), key), parse_int(val.substr(comma + 1), key)};
    } else if (key == "depth") {
      cfg.depth = parse_int(val, key);
    } else if (key == "embed_dim") {
      cfg.embed_dim = parse_int(val, key);
    } else if (key == "encoder_blocks") {
      cfg.encoder_blocks = parse_int(val, key);
    } else if (key == "encoder_bottleneck") {
      cfg.encoder_bottleneck = parse_int(val, key);
    } else if (key == "encoder_width") {
      cfg.encoder_width = parse_int(val, key);
    } else if (key == "heads") {
      cfg.heads = parse_int(val, key);
    } else if (key == "mlp_ratio") {
      cfg.mlp_ratio = parse_int(val, key);
    } else if (key == "patch_size") {
      cfg.patch_size = parse_int(val, key);
    } else {
      throw std::invalid_argument("codec config: unknown key '" + std::string(key) + "'");
    }
  }
  cfg.validate();
  return cfg;
}

CodecConfig CodecConfig::tiny() {
  CodecConfig cfg;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 4;
  cfg.encoder_width = 8;
  cfg.encoder_bottleneck = 4;
  cfg.encoder_blocks = 4;
  cfg.dae_widths = {4, 8};
  return cfg;
}

std::size_t TensorSpec::numel() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<TensorSpec> param_layout(const CodecConfig& cfg) {
  cfg.validate();
  std::vector<TensorSpec> out;
  auto conv = [&out](const std::string& name, int k, int cin, int cout) {
    out.push_back({name + ".w", {k, k, cin, cout}});
    out.push_back({name + ".b", {cout}});
  };
  const int w = cfg.encoder_width, bn = cfg.encoder_bottleneck, d = cfg.embed_dim;
  const int pd = cfg.patch_dim(), hidden = d * cfg.mlp_ratio;

  conv("enc.lift", 1, 3, w);
  for (int i = 0; i < cfg.encoder_blocks; ++i) {
    const std::string p = "enc.block" + std::to_string(i);
    conv(p + ".reduce", 1, w, bn);
    conv(p + ".conv", 3, bn, bn);
    conv(p + ".expand", 1, bn, w);
  }
  conv("enc.proj", 1, w, 3);

  out.push_back({"vit.patch.w", {pd, d}});
  out.push_back({"vit.patch.b", {d}});
  out.push_back({"vit.pos", {cfg.tokens(), d}});
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string p = "vit.layer" + std::to_string(l);
    out.push_back({p + ".ln1.g", {d}});
    out.push_back({p + ".ln1.b", {d}});
    out.push_back({p + ".attn.qkv.w", {d, 3 * d}});
    out.push_back({p + ".attn.qkv.b", {3 * d}});
    out.push_back({p + ".attn.out.w", {d, d}});
    out.push_back({p + ".attn.out.b", {d}});
    out.push_back({p + ".ln2.g", {d}});
    out.push_back({p + ".ln2.b", {d}});
    out.push_back({p + ".mlp.fc1.w", {d, hidden}});
    out.push_back({p + ".mlp.fc1.b", {hidden}});
    out.push_back({p + ".mlp.fc2.w", {hidden, d}});
    out.push_back({p + ".mlp.fc2.b", {d}});
  }
  out.push_back({"vit.norm.g", {d}});
  out.push_back({"vit.norm.b", {d}});

  out.push_back({"shortcut.w", {d, pd}});

  out.push_back({"dae.unpatch.w", {d, pd}});
  out.push_back({"dae.unpatch.b", {pd}});
  const int w0 = cfg.dae_widths[0], w1 = cfg.dae_widths[1];
  conv("dae.conv1", 3, 3, w0);
  conv("dae.conv2", 3, w0, w1);  // stride 2
  conv("dae.conv3", 3, w1, w1);
  conv("dae.conv4", 3, w1, w0);  // after x2 upsample
  conv("dae.conv5", 3, w0, 3);
  return out;
}

std::size_t param_count(const CodecConfig& cfg) {
  std::size_t n = 0;
  for (const auto& t : param_layout(cfg)) n += t.numel();
  return n;
}

// ------------------------------------------------------------------ ParamSet

template <class T>
ParamSet<T>::ParamSet(const std::vector<TensorSpec>& layout) {
  for (const auto& spec : layout) push_back({spec.name, spec.shape, TensorData<T>(spec.numel(), T(0))});
}

template <class T>
void ParamSet<T>::push_back(NamedTensor<T> t) {
  if (index_.count(t.name)) throw std::invalid_argument("duplicate tensor name " + t.name);
  index_.emplace(t.name, tensors_.size());
  tensors_.push_back(std::move(t));
}

template <class T>
std::size_t ParamSet<T>::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no tensor named " + std::string(name));
  return it->second;
}

template <class T>
std::size_t ParamSet<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

template <class T>
void ParamSet<T>::zero() {
  for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), T(0));
}

template <class T>
bool ParamSet<T>::operator==(const ParamSet& o) const {
  if (tensors_.size() != o.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = o.tensors_[i];
    if (a.name != b.name || a.shape != b.shape || a.data != b.data) return false;
  }
  return true;
}

template class ParamSet<float>;
template class ParamSet<double>;

ParamSet<float> init_params(const CodecConfig& cfg, std::uint64_t seed) {
  ParamSet<float> p(param_layout(cfg));
  Rng rng(seed);
  for (auto& t : p) {
    const std::string& n = t.name;
    const bool is_bias = n.ends_with(".b");
    const bool is_norm_scale = n.ends_with(".g");
    if (is_norm_scale) {
      std::fill(t.data.begin(), t.data.end(), 1.0f);
      continue;
    }
    if (is_bias) continue;
    double bound = 0.02;
    if (n != "vit.pos") {
      // fan-in = product of all but the output dimension
      std::size_t fan_in = 1;
      for (std::size_t k = 0; k + 1 < t.shape.size(); ++k) fan_in *= static_cast<std::size_t>(t.shape[k]);
      bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    }
    for (auto& v : t.data) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  }
  return p;
}

// ------------------------------------------------------------------ Codec

template <class T>
Codec<T>::Codec(const CodecConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  // Resolve tensor indices once against the canonical layout.
  const ParamSet<T> probe(param_layout(cfg_));
  auto conv = [&probe](const std::string& name) {
    return ConvIds{probe.index_of(name + ".w"), probe.index_of(name + ".b")};
  };
  enc_lift_ = conv("enc.lift");
  for (int i = 0; i < cfg_.encoder_blocks; ++i) {
    const std::string p = "enc.block" + std::to_string(i);
    enc_blocks_.push_back({conv(p + ".reduce"), conv(p + ".conv"), conv(p + ".expand")});
  }
  enc_proj_ = conv("enc.proj");
  patch_w_ = probe.index_of("vit.patch.w");
  patch_b_ = probe.index_of("vit.patch.b");
  pos_ = probe.index_of("vit.pos");
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string p = "vit.layer" + std::to_string(l);
    layers_.push_back({probe.index_of(p + ".ln1.g"), probe.index_of(p + ".ln1.b"),
                       probe.index_of(p + ".attn.qkv.w"), probe.index_of(p + ".attn.qkv.b"),
                       probe.index_of(p + ".attn.out.w"), probe.index_of(p + ".attn.out.b"),
                       probe.index_of(p + ".ln2.g"), probe.index_of(p + ".ln2.b"),
                       probe.index_of(p + ".mlp.fc1.w"), probe.index_of(p + ".mlp.fc1.b"),
                       probe.index_of(p + ".mlp.fc2.w"), probe.index_of(p + ".mlp.fc2.b")});
  }
  norm_g_ = probe.index_of("vit.norm.g");
  norm_b_ = probe.index_of("vit.norm.b");
  shortcut_w_ = probe.index_of("shortcut.w");
  dae_unpatch_ = conv("dae.unpatch");
  for (int i = 0; i < 5; ++i) dae_convs_[static_cast<std::size_t>(i)] = conv("dae.conv" + std::to_string(i + 1));
}

template <class T>
nn::WeightRef<T> Codec<T>::weight(const ParamSet<T>& p, ParamSet<T>* g, std::size_t id) {
  const auto& t = p[id];
  nn::WeightRef<T> r;
  r.value = t.data.data();
  r.grad = g ? (*g)[id].data.data() : nullptr;
  r.cols = t.shape.back();
  r.rows = static_cast<Eigen::Index>(t.data.size()) / r.cols;
  return r;
}

template <class T>
nn::BiasRef<T> Codec<T>::bias(const ParamSet<T>& p, ParamSet<T>* g, std::size_t id) {
  const auto& t = p[id];
  return {t.data.data(), g ? (*g)[id].data.data() : nullptr, static_cast<Eigen::Index>(t.data.size())};
}

template <class T>
nn::ConvGeometry Codec<T>::geom(int batch, int side, int cin, int cout, int kernel, int stride) const {
  return nn::ConvGeometry{batch, side, side, cin, cout, kernel, stride};
}

template <class T>
Mat<T> Codec<T>::patchify(const Mat<T>& images, int batch) const {
  const int ps = cfg_.patch_size, pps = cfg_.patches_per_side(), ntok = cfg_.tokens();
  Mat<T> tokens(static_cast<Eigen::Index>(batch) * ntok, cfg_.patch_dim());
  for (int n = 0; n < batch; ++n)
    for (int py = 0; py < pps; ++py)
      for (int px = 0; px < pps; ++px) {
        const Eigen::Index row = static_cast<Eigen::Index>(n) * ntok + py * pps + px;
        for (int dy = 0; dy < ps; ++dy)
          for (int dx = 0; dx < ps; ++dx) {
            const Eigen::Index pix = static_cast<Eigen::Index>(n) * 1024 + (py * ps + dy) * 32 + (px * ps + dx);
            for (int c = 0; c < 3; ++c) tokens(row, (dy * ps + dx) * 3 + c) = images(pix, c);
          }
      }
  return tokens;
}

template <class T>
Mat<T> Codec<T>::unpatchify(const Mat<T>& tokens, int batch) const {
  const int ps = cfg_.patch_size, pps = cfg_.patches_per_side(), ntok = cfg_.tokens();
  Mat<T> images(static_cast<Eigen::Index>(batch) * 1024, 3);
  for (int n = 0; n < batch; ++n)
    for (int py = 0; py < pps; ++py)
      for (int px = 0; px < pps; ++px) {
        const Eigen::Index row = static_cast<Eigen::Index>(n) * ntok + py * pps + px;
        for (int dy = 0; dy < ps; ++dy)
          for (int dx = 0; dx < ps; ++dx) {
            const Eigen::Index pix = static_cast<Eigen::Index>(n) * 1024 + (py * ps + dy) * 32 + (px * ps + dx);
            for (int c = 0; c < 3; ++c) images(pix, c) = tokens(row, (dy * ps + dx) * 3 + c);
          }
      }
  return images;
}

namespace {

template <class T>
int batch_of(const Mat<T>& images) {
  if (images.cols() != 3 || images.rows() % 1024 != 0 || images.rows() == 0) {
    throw std::invalid_argument("codec: expected a (B*32*32) x 3 tensor, got " + std::to_string(images.rows()) +
                                "x" + std::to_string(images.cols()));
  }
  return static_cast<int>(images.rows() / 1024);
}

}  // namespace

template <class T>
Mat<T> Codec<T>::encode(const Mat<T>& images, const ParamSet<T>& p, EncoderCache<T>* cache) const {
  const int batch = batch_of(images);
  const int w = cfg_.encoder_width, bn = cfg_.encoder_bottleneck;
  EncoderCache<T> local;
  EncoderCache<T>& c = cache ? *cache : local;
  c.batch = batch;
  c.input = images;
  c.block_in.clear();
  c.reduced.clear();
  c.spatial.clear();

  Mat<T> h = nn::conv_forward(images, geom(batch, 32, 3, w, 1), weight(p, nullptr, enc_lift_.w),
                              bias(p, nullptr, enc_lift_.b));
  for (const auto& blk : enc_blocks_) {
    Mat<T> r = nn::conv_forward(h, geom(batch, 32, w, bn, 1), weight(p, nullptr, blk[0].w), bias(p, nullptr, blk[0].b));
    nn::relu_inplace(r);
    Mat<T> s = nn::conv_forward(r, geom(batch, 32, bn, bn, 3), weight(p, nullptr, blk[1].w), bias(p, nullptr, blk[1].b));
    nn::relu_inplace(s);
    Mat<T> e = nn::conv_forward(s, geom(batch, 32, bn, w, 1), weight(p, nullptr, blk[2].w), bias(p, nullptr, blk[2].b));
    if (cache) {
      c.block_in.push_back(h);
      c.reduced.push_back(std::move(r));
      c.spatial.push_back(std::move(s));
    }
    h += e;
  }
  Mat<T> x = nn::conv_forward(h, geom(batch, 32, w, 3, 1), weight(p, nullptr, enc_proj_.w), bias(p, nullptr, enc_proj_.b));
  if (cache) c.last = std::move(h);
  return x;
}

template <class T>
void Codec<T>::encode_backward(const Mat<T>& d_symbols, const ParamSet<T>& p, ParamSet<T>& grads,
                               const EncoderCache<T>& c) const {
  const int batch = c.batch;
  const int w = cfg_.encoder_width, bn = cfg_.encoder_bottleneck;
  Mat<T> dh = nn::conv_backward(c.last, d_symbols, geom(batch, 32, w, 3, 1), weight(p, &grads, enc_proj_.w),
                                bias(p, &grads, enc_proj_.b));
  for (std::size_t i = enc_blocks_.size(); i-- > 0;) {
    const auto& blk = enc_blocks_[i];
    Mat<T> ds = nn::conv_backward(c.spatial[i], dh, geom(batch, 32, bn, w, 1), weight(p, &grads, blk[2].w),
                                  bias(p, &grads, blk[2].b));
    nn::relu_backward_inplace(ds, c.spatial[i]);
    Mat<T> dr = nn::conv_backward(c.reduced[i], ds, geom(batch, 32, bn, bn, 3), weight(p, &grads, blk[1].w),
                                  bias(p, &grads, blk[1].b));
    nn::relu_backward_inplace(dr, c.reduced[i]);
    dh += nn::conv_backward(c.block_in[i], dr, geom(batch, 32, w, bn, 1), weight(p, &grads, blk[0].w),
                            bias(p, &grads, blk[0].b));
  }
  nn::conv_backward(c.input, dh, geom(batch, 32, 3, w, 1), weight(p, &grads, enc_lift_.w),
                    bias(p, &grads, enc_lift_.b), /*want_dx=*/false);
}

template <class T>
Mat<T> Codec<T>::vit_forward(const Mat<T>& symbols, const ParamSet<T>& p, DecoderCache<T>& c) const {
  const int batch = batch_of(symbols);
  const int ntok = cfg_.tokens();
  c.batch = batch;
  c.tokens_in = patchify(symbols, batch);
  const auto patch_b = bias(p, nullptr, patch_b_);
  Mat<T> z = nn::linear_forward(c.tokens_in, weight(p, nullptr, patch_w_), &patch_b);
  const auto pos = nn::CMatMap<T>(p[pos_].data.data(), ntok, cfg_.embed_dim);
  for (int n = 0; n < batch; ++n) z.middleRows(static_cast<Eigen::Index>(n) * ntok, ntok) += pos;

  c.layers.assign(layers_.size(), TransformerLayerCache<T>{});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& ids = layers_[l];
    auto& lc = c.layers[l];
    lc.in = z;
    lc.ln1_out = nn::layernorm_forward(z, bias(p, nullptr, ids.ln1_g), bias(p, nullptr, ids.ln1_b), lc.ln1);
    const auto qkv_b = bias(p, nullptr, ids.qkv_b);
    Mat<T> qkv = nn::linear_forward(lc.ln1_out, weight(p, nullptr, ids.qkv_w), &qkv_b);
    lc.attn_out = nn::attention_forward(qkv, batch, ntok, cfg_.heads, lc.attn);
    const auto out_b = bias(p, nullptr, ids.out_b);
    lc.mid = z + nn::linear_forward(lc.attn_out, weight(p, nullptr, ids.out_w), &out_b);
    lc.ln2_out = nn::layernorm_forward(lc.mid, bias(p, nullptr, ids.ln2_g), bias(p, nullptr, ids.ln2_b), lc.ln2);
    const auto fc1_b = bias(p, nullptr, ids.fc1_b);
    lc.fc1_out = nn::linear_forward(lc.ln2_out, weight(p, nullptr, ids.fc1_w), &fc1_b);
    lc.gelu_out = nn::gelu_forward(lc.fc1_out);
    const auto fc2_b = bias(p, nullptr, ids.fc2_b);
    z = lc.mid + nn::linear_forward(lc.gelu_out, weight(p, nullptr, ids.fc2_w), &fc2_b);
  }
  c.final_in = z;
  c.x0 = nn::layernorm_forward(z, bias(p, nullptr, norm_g_), bias(p, nullptr, norm_b_), c.final_ln);
  return c.x0;
}

template <class T>
Mat<T> Codec<T>::vit_features(const Mat<T>& symbols, const ParamSet<T>& p) const {
  DecoderCache<T> c;
  return vit_forward(symbols, p, c);
}

template <class T>
Mat<T> Codec<T>::decode(const Mat<T>& symbols, const ParamSet<T>& p, DecoderCache<T>* cache) const {
  DecoderCache<T> local;
  DecoderCache<T>& c = cache ? *cache : local;
  const Mat<T>& x0 = vit_forward(symbols, p, c);
  const int batch = c.batch;
  const int w0 = cfg_.dae_widths[0], w1 = cfg_.dae_widths[1];

  Mat<T> out = unpatchify(nn::linear_forward<T>(x0, weight(p, nullptr, shortcut_w_), nullptr), batch);

  const auto unpatch_b = bias(p, nullptr, dae_unpatch_.b);
  c.dae_in = unpatchify(nn::linear_forward(x0, weight(p, nullptr, dae_unpatch_.w), &unpatch_b), batch);
  auto conv = [&](const Mat<T>& in, std::size_t k, int side, int cin, int cout, int stride) {
    return nn::conv_forward(in, geom(batch, side, cin, cout, 3, stride), weight(p, nullptr, dae_convs_[k].w),
                            bias(p, nullptr, dae_convs_[k].b));
  };
  c.d1 = conv(c.dae_in, 0, 32, 3, w0, 1);
  nn::relu_inplace(c.d1);
  c.d2 = conv(c.d1, 1, 32, w0, w1, 2);
  nn::relu_inplace(c.d2);
  c.d3 = conv(c.d2, 2, 16, w1, w1, 1);
  nn::relu_inplace(c.d3);
  c.up = nn::upsample2_forward(c.d3, batch, 16, 16);
  c.d4 = conv(c.up, 3, 32, w1, w0, 1);
  nn::relu_inplace(c.d4);
  out += conv(c.d4, 4, 32, w0, 3, 1);
  if (!cache) {
    // Drop the large intermediates eagerly when the caller does not need them.
    c = DecoderCache<T>{};
  }
  return out;
}

template <class T>
Mat<T> Codec<T>::decode_backward(const Mat<T>& d_images, const ParamSet<T>& p, ParamSet<T>& grads,
                                 const DecoderCache<T>& c) const {
  const int batch = c.batch;
  const int ntok = cfg_.tokens();
  const int w0 = cfg_.dae_widths[0], w1 = cfg_.dae_widths[1];
  auto conv_back = [&](const Mat<T>& in, const Mat<T>& dy, std::size_t k, int side, int cin, int cout, int stride) {
    return nn::conv_backward(in, dy, geom(batch, side, cin, cout, 3, stride), weight(p, &grads, dae_convs_[k].w),
                             bias(p, &grads, dae_convs_[k].b));
  };

  // DAE branch.
  Mat<T> g = conv_back(c.d4, d_images, 4, 32, w0, 3, 1);
  nn::relu_backward_inplace(g, c.d4);
  g = conv_back(c.up, g, 3, 32, w1, w0, 1);
  g = nn::upsample2_backward(g, batch, 16, 16);
  nn::relu_backward_inplace(g, c.d3);
  g = conv_back(c.d2, g, 2, 16, w1, w1, 1);
  nn::relu_backward_inplace(g, c.d2);
  g = conv_back(c.d1, g, 1, 32, w0, w1, 2);
  nn::relu_backward_inplace(g, c.d1);
  g = conv_back(c.dae_in, g, 0, 32, 3, w0, 1);
  const auto unpatch_b = bias(p, &grads, dae_unpatch_.b);
  Mat<T> dx0 = nn::linear_backward(c.x0, patchify(g, batch), weight(p, &grads, dae_unpatch_.w), &unpatch_b);

  // Shortcut branch.
  dx0 += nn::linear_backward<T>(c.x0, patchify(d_images, batch), weight(p, &grads, shortcut_w_), nullptr);

  // ViT.
  Mat<T> dz = nn::layernorm_backward(dx0, bias(p, &grads, norm_g_), bias(p, &grads, norm_b_), c.final_ln);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& ids = layers_[l];
    const auto& lc = c.layers[l];
    // z = mid + fc2(gelu(fc1(ln2(mid))))
    const auto fc2_b = bias(p, &grads, ids.fc2_b);
    Mat<T> dgelu = nn::linear_backward(lc.gelu_out, dz, weight(p, &grads, ids.fc2_w), &fc2_b);
    Mat<T> dfc1 = nn::gelu_backward(lc.fc1_out, dgelu);
    const auto fc1_b = bias(p, &grads, ids.fc1_b);
    Mat<T> dln2 = nn::linear_backward(lc.ln2_out, dfc1, weight(p, &grads, ids.fc1_w), &fc1_b);
    Mat<T> dmid = dz + nn::layernorm_backward(dln2, bias(p, &grads, ids.ln2_g), bias(p, &grads, ids.ln2_b), lc.ln2);
    // mid = in + out(attn(qkv(ln1(in))))
    const auto out_b = bias(p, &grads, ids.out_b);
    Mat<T> dattn = nn::linear_backward(lc.attn_out, dmid, weight(p, &grads, ids.out_w), &out_b);
    Mat<T> dqkv = nn::attention_backward(dattn, batch, ntok, cfg_.heads, lc.attn);
    const auto qkv_b = bias(p, &grads, ids.qkv_b);
    Mat<T> dln1 = nn::linear_backward(lc.ln1_out, dqkv, weight(p, &grads, ids.qkv_w), &qkv_b);
    dz = dmid + nn::layernorm_backward(dln1, bias(p, &grads, ids.ln1_g), bias(p, &grads, ids.ln1_b), lc.ln1);
  }
  // Positional embedding and patch embedding.
  auto dpos = nn::MatMap<T>(grads[pos_].data.data(), ntok, cfg_.embed_dim);
  for (int n = 0; n < batch; ++n) dpos += dz.middleRows(static_cast<Eigen::Index>(n) * ntok, ntok);
  const auto patch_b = bias(p, &grads, patch_b_);
  Mat<T> dtokens = nn::linear_backward(c.tokens_in, dz, weight(p, &grads, patch_w_), &patch_b);
  return unpatchify(dtokens, batch);
}

template class Codec<float>;
template class Codec<double>;

// ------------------------------------------------------------------ batching

Mat<float> stack_images(std::span<const ImageF> images) {
  Mat<float> out(static_cast<Eigen::Index>(images.size()) * 1024, 3);
  for (std::size_t n = 0; n < images.size(); ++n)
    std::copy(images[n].pixels.begin(), images[n].pixels.end(), out.data() + n * kImageElems);
  return out;
}

std::vector<ImageF> unstack_images(const Mat<float>& batch) {
  if (batch.cols() != 3 || batch.rows() % 1024 != 0) throw std::invalid_argument("unstack_images: bad shape");
  std::vector<ImageF> out(static_cast<std::size_t>(batch.rows() / 1024));
  for (std::size_t n = 0; n < out.size(); ++n) {
    const float* src = batch.data() + n * kImageElems;
    for (std::size_t i = 0; i < kImageElems; ++i) out[n].pixels[i] = std::clamp(src[i], 0.0f, 1.0f);
  }
  return out;
}

}  // namespace semlink
