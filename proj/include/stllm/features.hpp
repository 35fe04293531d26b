#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stllm/types.hpp"

namespace stllm {

// Feature file layout, little-endian throughout:
//   "STFZ" | version:u8 | T:u32 | d:u32 | T*d float32 values, row-major by frame
inline constexpr char kFeatureMagic[4] = {'S', 'T', 'F', 'Z'};
inline constexpr std::uint8_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 13;

std::vector<std::uint8_t> encode_features(const FeatureSequencef& seq);
FeatureSequencef decode_features(std::span<const std::uint8_t> bytes);

void write_features(const FeatureSequencef& seq, const std::filesystem::path& path);
FeatureSequencef read_features(const std::filesystem::path& path);

}  // namespace stllm
