#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stllm/types.hpp"

namespace stllm {

// Binary container, little-endian:
//   "STCK" | version:u32 | arch_hash:u64 | config:str | vocab:str | optimizer_step:i64
//   | n:u32 | n x (name:str | rows:u32 | cols:u32 | rows*cols f64)
// where str = length:u32 followed by UTF-8 bytes. Optimizer moments are stored
// as ordinary tensors named "adam.m/<tensor>" and "adam.v/<tensor>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t arch_hash = 0;
  std::string config_ini;
  std::string vocab_text;
  std::int64_t optimizer_step = 0;
  std::vector<std::pair<std::string, Mat<double>>> tensors;

  const Mat<double>* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace stllm
