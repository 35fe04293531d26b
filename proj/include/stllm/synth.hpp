#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stllm/manifest.hpp"
#include "stllm/types.hpp"

namespace stllm {

struct SyntheticSpec {
  std::uint64_t seed = 7;
  int n_samples = 32;
  int vocab_size = 30;
  int len_min = 3, len_max = 6;
  int repeat_min = 2, repeat_max = 4;
  double noise_sigma = 0.1;
  int dim = 16;

  void validate() const;
};

/// Label id of the CTC blank in generated frame labels; source token i has label i + 1.
inline constexpr int kSynthBlankLabel = 0;

struct SyntheticSample {
  ManifestRecord record;
  FeatureSequencef features;
  std::vector<int> tokens;   // source token indices
  std::vector<int> repeats;  // frames per token
};

struct SyntheticCorpus {
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;
  /// source index -> target index (a permutation)
  std::vector<int> mapping;
  std::vector<SyntheticSample> samples;
};

/// Per-token substitution followed by word-order reversal.
std::vector<std::string> substitute_and_reverse(const std::vector<std::string>& words,
                                                const std::vector<std::string>& source_words,
                                                const std::vector<std::string>& target_words,
                                                const std::vector<int>& mapping);

/// In-memory generation; a pure function of `spec`.
SyntheticCorpus synthesize(const SyntheticSpec& spec);

/// Writes `<out_dir>/manifest.jsonl` and `<out_dir>/features/<id>.stfz`.
Manifest synth_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace stllm
