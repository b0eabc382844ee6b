#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "logsentinel/error.hpp"
#include "logsentinel/seqmodel.hpp"

// Checkpoint layout (all integers and floats little-endian):
//   "LSNTCKPT" | u32 version | u32 epoch | str config_json | str rng_state
//   i32 num_classes | i32 seq_len | u32 layers
//   per layer: u32 input_dim | u32 hidden_dim | f64[] W (4H x in) | f64[] U (4H x H) | f64[] b (4H)
//   u8 has_attention [ u32 attn_dim | f64[] W_a (A x H) | f64[] v (A) ]
//   f64[] V (C x H) | f64[] c (C)
//   u64 FNV-1a hash of every preceding byte
// Matrices are stored column-major; str = u64 length + bytes.

namespace logsentinel {

namespace {

constexpr char kMagic[8] = {'L', 'S', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void pod(T v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  template <typename M>
  void tensor(const M& m) { bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw Error("truncated checkpoint");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > buf_.size() - pos_) throw Error("truncated checkpoint");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  template <typename M>
  void tensor(M& m) { bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }
  std::size_t pos() const { return pos_; }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto& m = ck.model;
  m.validate();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ck.epoch));
  w.str(ck.config.dump());
  w.str(ck.rng_state);
  w.pod<std::int32_t>(m.num_classes);
  w.pod<std::int32_t>(m.seq_len);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.layers.size()));
  for (const auto& l : m.layers) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(l.input_dim()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(l.hidden_dim()));
    w.tensor(l.input_weights);
    w.tensor(l.recurrent_weights);
    w.tensor(l.bias);
  }
  w.pod<std::uint8_t>(m.has_attention() ? 1 : 0);
  if (m.attention) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.attention->attn_dim()));
    w.tensor(m.attention->projection);
    w.tensor(m.attention->score);
  }
  w.tensor(m.output_weights);
  w.tensor(m.output_bias);
  w.pod<std::uint64_t>(fnv1a(w.buffer().data(), w.buffer().size()));

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string data = ss.str();
  if (data.size() < sizeof kMagic + 8 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw Error("not a checkpoint file: " + path.string());
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, data.data() + data.size() - 8, 8);
  if (stored != fnv1a(data.data(), data.size() - 8)) throw Error("checkpoint checksum mismatch: " + path.string());

  Reader r(std::move(data));
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (r.pod<std::uint32_t>() != kVersion) throw Error("unsupported checkpoint version");
  Checkpoint ck;
  ck.epoch = static_cast<int>(r.pod<std::uint32_t>());
  ck.config = nlohmann::json::parse(r.str(), nullptr, false);
  if (ck.config.is_discarded()) throw Error("corrupt checkpoint config");
  ck.rng_state = r.str();
  auto& m = ck.model;
  m.num_classes = r.pod<std::int32_t>();
  m.seq_len = r.pod<std::int32_t>();
  const auto layers = r.pod<std::uint32_t>();
  if (layers == 0 || layers > 64) throw Error("corrupt checkpoint layer count");
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto in_dim = static_cast<Eigen::Index>(r.pod<std::uint32_t>());
    const auto h = static_cast<Eigen::Index>(r.pod<std::uint32_t>());
    LstmLayerParams<double> l{Eigen::MatrixXd(4 * h, in_dim), Eigen::MatrixXd(4 * h, h), Eigen::VectorXd(4 * h)};
    r.tensor(l.input_weights);
    r.tensor(l.recurrent_weights);
    r.tensor(l.bias);
    m.layers.push_back(std::move(l));
  }
  const auto h = m.layers.back().hidden_dim();
  if (r.pod<std::uint8_t>() != 0) {
    const auto a = static_cast<Eigen::Index>(r.pod<std::uint32_t>());
    AttentionParams<double> ap{Eigen::MatrixXd(a, h), Eigen::VectorXd(a)};
    r.tensor(ap.projection);
    r.tensor(ap.score);
    m.attention = std::move(ap);
  }
  m.output_weights.resize(m.num_classes, h);
  m.output_bias.resize(m.num_classes);
  r.tensor(m.output_weights);
  r.tensor(m.output_bias);
  if (r.pos() + 8 != r.buffer().size()) throw Error("trailing bytes in checkpoint");
  m.validate();
  return ck;
}

}  // namespace logsentinel
