#include "stllm/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "stllm/errors.hpp"

namespace stllm {
namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;

 private:
  void uint(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void need(std::uint64_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(FormatError::Kind::Truncated, "checkpoint: truncated");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t uint(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Mat<double>* Checkpoint::find(const std::string& name) const {
  for (const auto& [k, v] : tensors)
    if (k == name) return &v;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : {'S', 'T', 'C', 'K'}) w.bytes.push_back(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u64(ckpt.arch_hash);
  w.str(ckpt.config_ini);
  w.str(ckpt.vocab_text);
  w.u64(static_cast<std::uint64_t>(ckpt.optimizer_step));
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (Index i = 0; i < t.size(); ++i) w.u64(std::bit_cast<std::uint64_t>(t.data()[i]));
  }
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'S' || bytes[1] != 'T' || bytes[2] != 'C' || bytes[3] != 'K')
    throw FormatError(FormatError::Kind::BadMagic, "checkpoint: bad magic");
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(FormatError::Kind::BadVersion, "checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  c.arch_hash = r.u64();
  c.config_ini = r.str();
  c.vocab_text = r.str();
  c.optimizer_step = static_cast<std::int64_t>(r.u64());
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const std::uint64_t rows = r.u32(), cols = r.u32();
    r.need(rows * cols * 8);
    Mat<double> t(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index k = 0; k < t.size(); ++k) t.data()[k] = std::bit_cast<double>(r.u64());
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError(FormatError::Kind::TrailingBytes, "checkpoint: trailing bytes");
  return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace stllm
