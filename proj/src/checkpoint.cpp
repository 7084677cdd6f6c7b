#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "snncodec/error.hpp"
#include "snncodec/network.hpp"

namespace snncodec {

namespace {

constexpr char kMagic[8] = {'S', 'N', 'N', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const Model& model) {
  Checkpoint ckpt{model.config(), {}, model.epoch(), model.history()};
  for (const auto& [name, t] : model.parameters()) ckpt.params.emplace_back(name, t.detach());
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.config);
  if (ckpt.params.size() != model.parameters().size()) throw FormatError("checkpoint parameter count mismatch");
  for (const auto& [name, t] : ckpt.params) model.assign(name, t);
  for (const auto& m : ckpt.history) model.record_epoch(m);
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const Checkpoint ckpt = make_checkpoint(model);
  const std::string config_text = ckpt.config.to_text();
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u64(fnv1a64(config_text));
  w.str(config_text);
  w.u64(ckpt.epoch);
  w.u32(static_cast<std::uint32_t>(ckpt.history.size()));
  for (const auto& m : ckpt.history) {
    w.u64(m.epoch);
    w.f64(m.train_loss);
    w.f64(m.eval_accuracy);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Reader r(std::vector<std::uint8_t>{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});

  char magic[sizeof(kMagic)];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError("not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported");
  }
  const std::uint64_t digest = r.u64();
  const std::string config_text = r.str();
  if (fnv1a64(config_text) != digest) throw FormatError("checkpoint config digest mismatch");

  Checkpoint ckpt;
  try {
    KeyValues kv = parse_key_values(config_text);
    ckpt.config = ModelConfig::from_key_values(kv);
    if (!kv.empty()) throw FormatError("checkpoint config has unknown key " + kv.begin()->first);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  ckpt.epoch = r.u64();
  const std::uint32_t history = r.u32();
  for (std::uint32_t i = 0; i < history; ++i) {
    EpochMetrics m;
    m.epoch = r.u64();
    m.train_loss = r.f64();
    m.eval_accuracy = r.f64();
    ckpt.history.push_back(m);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint parameter " + name + " has bad rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d == 0 || d > (std::size_t{1} << 32)) throw FormatError("checkpoint parameter " + name + " has bad shape");
      n *= d;
    }
    std::vector<double> values(n);
    for (double& v : values) v = r.f64();
    ckpt.params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  Model model = model_from_checkpoint(ckpt);
  if (model.epoch() != ckpt.epoch) throw FormatError("checkpoint epoch inconsistent with history");
  return model;
}

Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Model model = load_checkpoint(path);
  if (model.config().digest() != expected.digest()) {
    throw FormatError("checkpoint config digest does not match the expected configuration");
  }
  return model;
}

}  // namespace snncodec
