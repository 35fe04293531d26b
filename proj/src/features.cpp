#include "stllm/features.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "stllm/errors.hpp"

namespace stllm {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_features(const FeatureSequencef& seq) {
  if (seq.rows() < 1 || seq.cols() < 1)
    throw ShapeError("feature sequence must have T >= 1 and d >= 1");
  if (static_cast<std::uint64_t>(seq.rows()) > std::numeric_limits<std::uint32_t>::max() ||
      static_cast<std::uint64_t>(seq.cols()) > std::numeric_limits<std::uint32_t>::max())
    throw FormatError(FormatError::Kind::Overflow, "feature dimensions exceed 32 bits");
  if (!seq.allFinite()) throw FormatError(FormatError::Kind::Parse, "non-finite feature value");

  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderBytes + 4 * static_cast<std::size_t>(seq.size()));
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  out.push_back(kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(seq.rows()));
  put_u32(out, static_cast<std::uint32_t>(seq.cols()));
  for (Index i = 0; i < seq.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(seq.data()[i]));
  return out;
}

FeatureSequencef decode_features(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < 4 || !std::equal(std::begin(kFeatureMagic), std::end(kFeatureMagic), bytes.begin()))
    throw FormatError(Kind::BadMagic, "feature file: bad magic");
  if (bytes.size() < kFeatureHeaderBytes) throw FormatError(Kind::Truncated, "feature file: truncated header");
  if (bytes[4] != kFeatureVersion)
    throw FormatError(Kind::BadVersion, "feature file: unsupported version " + std::to_string(bytes[4]));

  const std::uint64_t frames = get_u32(bytes, 5);
  const std::uint64_t dim = get_u32(bytes, 9);
  if (frames == 0 || dim == 0) throw FormatError(Kind::Parse, "feature file: zero-sized dimension");
  const std::uint64_t count = frames * dim;
  if (count > std::numeric_limits<std::uint32_t>::max())
    throw FormatError(Kind::Overflow, "feature file: T*d overflows the 32-bit element count");

  const std::uint64_t payload = bytes.size() - kFeatureHeaderBytes;
  if (payload < 4 * count)
    throw FormatError(Kind::Truncated, "feature file: expected " + std::to_string(4 * count) +
                                           " payload bytes, found " + std::to_string(payload));
  if (payload > 4 * count) throw FormatError(Kind::TrailingBytes, "feature file: trailing bytes after payload");

  FeatureSequencef seq(static_cast<Index>(frames), static_cast<Index>(dim));
  for (std::uint64_t i = 0; i < count; ++i)
    seq.data()[i] = std::bit_cast<float>(get_u32(bytes, kFeatureHeaderBytes + 4 * i));
  if (!seq.allFinite()) throw FormatError(Kind::Parse, "feature file: non-finite value");
  return seq;
}

void write_features(const FeatureSequencef& seq, const std::filesystem::path& path) {
  const auto bytes = encode_features(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

FeatureSequencef read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open feature file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_features(bytes);
}

}  // namespace stllm
