#include "semlink/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace semlink {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

enum class DType : std::uint8_t { kF32 = 0, kU64 = 1, kF64 = 2 };

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void entry(const std::string& name, const std::vector<int>& shape, DType dtype, const void* data,
             std::size_t nbytes) {
    if (name.size() > 0xFFFF) throw CheckpointError("tensor name too long: " + name);
    pod<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    bytes(name.data(), name.size());
    pod<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
    for (int d : shape) pod<std::uint32_t>(static_cast<std::uint32_t>(d));
    pod<std::uint8_t>(static_cast<std::uint8_t>(dtype));
    bytes(data, nbytes);
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

struct Entry {
  std::string name;
  std::vector<int> shape;
  DType dtype;
  std::vector<std::uint8_t> payload;

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
  template <class T>
  std::vector<T> as() const {
    std::vector<T> out(payload.size() / sizeof(T));
    std::memcpy(out.data(), payload.data(), payload.size());
    return out;
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Entry entry() {
    Entry e;
    e.name = str(pod<std::uint16_t>());
    const auto rank = pod<std::uint8_t>();
    for (int i = 0; i < rank; ++i) e.shape.push_back(static_cast<int>(pod<std::uint32_t>()));
    const auto tag = pod<std::uint8_t>();
    std::size_t width = 0;
    switch (tag) {
      case 0: width = 4; break;
      case 1:
      case 2: width = 8; break;
      default: throw CheckpointError("unknown dtype tag " + std::to_string(tag) + " for " + e.name);
    }
    e.dtype = static_cast<DType>(tag);
    const std::size_t n = e.numel() * width;
    need(n);
    e.payload.assign(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return e;
  }
  std::vector<Entry> section() {
    const auto count = pod<std::uint32_t>();
    std::vector<Entry> out;
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(entry());
    return out;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw CheckpointError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

void write_f32_section(Writer& w, const ParamSet<float>& set, const std::string& prefix) {
  for (const auto& t : set) w.entry(prefix + t.name, t.shape, DType::kF32, t.data.data(), t.data.size() * 4);
}

ParamSet<float> read_f32(const std::vector<Entry>& entries, const std::string& prefix, const CodecConfig& cfg) {
  ParamSet<float> out(param_layout(cfg));
  std::size_t found = 0;
  for (const auto& e : entries) {
    if (!e.name.starts_with(prefix)) continue;
    const std::string name = e.name.substr(prefix.size());
    if (!out.contains(name)) throw CheckpointError("unexpected tensor " + e.name);
    auto& t = out.at(name);
    if (e.dtype != DType::kF32 || e.shape != t.shape) throw CheckpointError("shape/dtype mismatch for " + e.name);
    const auto values = e.as<float>();
    t.data.assign(values.begin(), values.end());
    ++found;
  }
  if (found != out.size()) throw CheckpointError("missing tensors under '" + prefix + "'");
  return out;
}

const Entry& find(const std::vector<Entry>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw CheckpointError("missing checkpoint entry " + name);
}

std::uint64_t scalar_u64(const std::vector<Entry>& entries, const std::string& name) {
  const auto& e = find(entries, name);
  if (e.dtype != DType::kU64 || e.numel() != 1) throw CheckpointError("bad entry " + name);
  return e.as<std::uint64_t>()[0];
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes("SMCK", 4);
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string cfg = ckpt.config.to_text();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg.data(), cfg.size());

  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size()));
  write_f32_section(w, ckpt.params, "");

  const bool has_moments = ckpt.adam_m.size() != 0;
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(has_moments ? ckpt.adam_m.size() + ckpt.adam_v.size() : 0));
  if (has_moments) {
    write_f32_section(w, ckpt.adam_m, "adam.m/");
    write_f32_section(w, ckpt.adam_v, "adam.v/");
  }

  std::vector<std::uint64_t> hist_phase;
  std::vector<std::uint64_t> hist_epoch;
  std::vector<double> hist_loss;
  for (const auto& h : ckpt.history) {
    hist_phase.push_back(static_cast<std::uint64_t>(h.phase));
    hist_epoch.push_back(static_cast<std::uint64_t>(h.epoch));
    hist_loss.push_back(h.mean_loss);
  }
  const std::uint64_t phase = static_cast<std::uint64_t>(ckpt.progress.phase);
  const std::uint64_t epoch = static_cast<std::uint64_t>(ckpt.progress.epoch);
  const std::uint64_t spare_bits = std::bit_cast<std::uint64_t>(ckpt.rng_spare);
  const std::uint64_t spare[2] = {ckpt.rng_has_spare ? 1u : 0u, spare_bits};
  const int nh = static_cast<int>(ckpt.history.size());
  w.pod<std::uint32_t>(9);
  w.entry("state.phase", {1}, DType::kU64, &phase, 8);
  w.entry("state.epoch", {1}, DType::kU64, &epoch, 8);
  w.entry("state.adam_t", {1}, DType::kU64, &ckpt.progress.adam_t, 8);
  w.entry("state.seed", {1}, DType::kU64, &ckpt.run_seed, 8);
  w.entry("rng.state", {4}, DType::kU64, ckpt.rng_state.data(), 32);
  w.entry("rng.spare", {2}, DType::kU64, spare, 16);
  w.entry("history.phase", {nh}, DType::kU64, hist_phase.data(), hist_phase.size() * 8);
  w.entry("history.epoch", {nh}, DType::kU64, hist_epoch.data(), hist_epoch.size() * 8);
  w.entry("history.loss", {nh}, DType::kF64, hist_loss.data(), hist_loss.size() * 8);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != "SMCK") throw CheckpointError("bad checkpoint magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  try {
    ck.config = CodecConfig::from_text(r.str(r.pod<std::uint32_t>()));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("bad config blob: ") + e.what());
  }
  ck.params = read_f32(r.section(), "", ck.config);
  const auto opt = r.section();
  if (!opt.empty()) {
    ck.adam_m = read_f32(opt, "adam.m/", ck.config);
    ck.adam_v = read_f32(opt, "adam.v/", ck.config);
  }
  const auto state = r.section();
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  ck.progress.phase = static_cast<int>(scalar_u64(state, "state.phase"));
  ck.progress.epoch = static_cast<int>(scalar_u64(state, "state.epoch"));
  ck.progress.adam_t = scalar_u64(state, "state.adam_t");
  ck.run_seed = scalar_u64(state, "state.seed");
  const auto rs = find(state, "rng.state").as<std::uint64_t>();
  if (rs.size() != 4) throw CheckpointError("bad rng.state");
  std::copy(rs.begin(), rs.end(), ck.rng_state.begin());
  const auto sp = find(state, "rng.spare").as<std::uint64_t>();
  if (sp.size() != 2) throw CheckpointError("bad rng.spare");
  ck.rng_has_spare = sp[0] != 0;
  ck.rng_spare = std::bit_cast<double>(sp[1]);
  const auto hp = find(state, "history.phase").as<std::uint64_t>();
  const auto he = find(state, "history.epoch").as<std::uint64_t>();
  const auto hl = find(state, "history.loss").as<double>();
  if (hp.size() != hl.size() || he.size() != hl.size()) throw CheckpointError("inconsistent history");
  for (std::size_t i = 0; i < hl.size(); ++i)
    ck.history.push_back({static_cast<int>(hp[i]), static_cast<int>(he[i]), hl[i]});
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint load_checkpoint(const fs::path& path, const CodecConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.config == expected)) {
    auto flat = [](std::string t) {
      for (auto& ch : t)
        if (ch == '\n') ch = ' ';
      return t;
    };
    throw CheckpointError("checkpoint config does not match the run configuration: checkpoint{" +
                          flat(ck.config.to_text()) + "} run{" + flat(expected.to_text()) + "}");
  }
  return ck;
}

Checkpoint make_weights_checkpoint(const CodecConfig& cfg, ParamSet<float> params) {
  Checkpoint ck;
  ck.config = cfg;
  ck.params = std::move(params);
  return ck;
}

}  // namespace semlink
