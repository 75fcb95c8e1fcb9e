#include "sargan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sargan/errors.hpp"

namespace sargan {
namespace {

constexpr char kMagic[8] = {'S', 'A', 'R', 'G', 'A', 'N', 'C', 'K'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '!'};

class Writer {
 public:
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void size(std::size_t v) { u32(static_cast<std::uint32_t>(v)); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) size(d);
    for (double v : t.data()) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : in_(bytes) {}

  void need(std::size_t n, const char* what) {
    if (pos_ + n > in_.size()) {
      fail(std::string("truncated while reading ") + what + ": need " + std::to_string(n) +
           " bytes, " + std::to_string(in_.size() - pos_) + " remain");
    }
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError("checkpoint: " + msg + " (byte offset " + std::to_string(pos_) + ")");
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(in_[pos_++])} << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(in_[pos_++])} << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect(const char* lit, std::size_t n, const char* what) {
    need(n, what);
    if (std::memcmp(in_.data() + pos_, lit, n) != 0) fail(std::string("bad ") + what);
    pos_ += n;
  }
  void tensor_into(Tensor& t, const char* what) {
    const std::size_t at = pos_;
    const std::uint32_t rank = u32(what);
    Shape shape(rank);
    for (auto& d : shape) d = u32(what);
    if (shape != t.shape()) {
      pos_ = at;
      fail(std::string(what) + " has shape " + shape_str(shape) + ", layer table expects " +
           shape_str(t.shape()));
    }
    need(t.size() * 8, what);
    for (double& v : t.data()) v = f64(what);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_layer_tensors(Writer& w, const LayerDesc& d, const LayerState& l) {
  w.tensor(l.weight.value);
  w.tensor(l.bias.value);
  if (d.batch_norm) {
    w.tensor(l.gamma.value);
    w.tensor(l.beta.value);
    w.tensor(l.stats.running_mean);
    w.tensor(l.stats.running_var);
  }
}

}  // namespace

std::string checkpoint_filename(std::uint32_t epoch) {
  return "ckpt_epoch" + std::to_string(epoch) + ".bin";
}

std::string serialize_checkpoint(const NetworkState& state, std::uint32_t epoch) {
  const NetworkSpec& spec = state.spec;
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(epoch);
  w.str(spec.variant);
  w.u8(spec.kind == NetworkKind::generator ? 0 : 1);
  w.size(spec.base_channels);
  w.size(spec.depth);
  w.size(spec.in_channels);
  w.size(spec.patch_size);
  w.size(spec.layers.size());
  for (const LayerDesc& d : spec.layers) {
    w.u8(d.op == LayerOp::conv ? 0 : 1);
    w.size(d.kernel);
    w.size(d.stride);
    w.size(d.padding);
    w.size(d.output_padding);
    w.size(d.in_channels);
    w.size(d.out_channels);
    w.u8(d.batch_norm ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(d.activation.kind));
    w.f64(d.activation.slope);
    w.f64(d.dropout_rate);
    w.i32(d.skip_source ? static_cast<std::int32_t>(*d.skip_source) : -1);
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    write_layer_tensors(w, spec.layers[i], state.layers[i]);
  }
  w.bytes(kTrailer, sizeof kTrailer);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect(kMagic, sizeof kMagic, "magic");
  const std::uint32_t version = r.u32("format version");
  if (version != kCheckpointVersion) {
    r.fail("unsupported format version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.epoch = r.u32("epoch");
  NetworkSpec spec;
  spec.variant = r.str("variant name");
  const std::uint8_t kind = r.u8("network kind");
  if (kind > 1) r.fail("unknown network kind " + std::to_string(kind));
  spec.kind = kind == 0 ? NetworkKind::generator : NetworkKind::discriminator;
  spec.base_channels = r.u32("base channels");
  spec.depth = r.u32("depth");
  spec.in_channels = r.u32("input channels");
  spec.patch_size = r.u32("patch size");
  const std::uint32_t n_layers = r.u32("layer count");
  if (n_layers > 4096) r.fail("implausible layer count " + std::to_string(n_layers));
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerDesc d;
    const std::uint8_t op = r.u8("layer op");
    if (op > 1) r.fail("unknown layer op " + std::to_string(op));
    d.op = op == 0 ? LayerOp::conv : LayerOp::conv_transpose;
    d.kernel = r.u32("kernel");
    d.stride = r.u32("stride");
    d.padding = r.u32("padding");
    d.output_padding = r.u32("output padding");
    d.in_channels = r.u32("input channels");
    d.out_channels = r.u32("output channels");
    d.batch_norm = r.u8("batch norm flag") != 0;
    const std::uint8_t act = r.u8("activation");
    if (act > static_cast<std::uint8_t>(Activation::Kind::sigmoid)) {
      r.fail("unknown activation " + std::to_string(act));
    }
    d.activation.kind = static_cast<Activation::Kind>(act);
    d.activation.slope = r.f64("activation slope");
    d.dropout_rate = r.f64("dropout rate");
    const auto skip = static_cast<std::int32_t>(r.u32("skip source"));
    if (skip >= static_cast<std::int32_t>(i)) r.fail("skip source must precede its layer");
    if (skip >= 0) d.skip_source = static_cast<std::size_t>(skip);
    spec.layers.push_back(d);
  }
  ck.state = allocate_state(std::move(spec));
  for (std::size_t i = 0; i < ck.state.layers.size(); ++i) {
    LayerState& l = ck.state.layers[i];
    r.tensor_into(l.weight.value, "weight");
    r.tensor_into(l.bias.value, "bias");
    if (ck.state.spec.layers[i].batch_norm) {
      r.tensor_into(l.gamma.value, "gamma");
      r.tensor_into(l.beta.value, "beta");
      r.tensor_into(l.stats.running_mean, "running mean");
      r.tensor_into(l.stats.running_var, "running variance");
    }
  }
  r.expect(kTrailer, sizeof kTrailer, "trailer");
  if (!r.done()) r.fail("trailing bytes after checkpoint trailer");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkState& state,
                     std::uint32_t epoch) {
  const std::string bytes = serialize_checkpoint(state, epoch);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw std::runtime_error("failed to write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize_checkpoint(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace sargan
