#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "stllm/microlm.hpp"
#include "stllm/optim.hpp"

namespace stllm {

enum class AdapterKind { CtcCollapse, Conv5x5 };
/// Where CTC-collapse frame labels come from.
enum class LabelSource { Manifest, Classifier };

struct AdapterConfig {
  AdapterKind kind = AdapterKind::CtcCollapse;
  bool keep_blanks = false;
  int blank_id = 0;
  /// Convolution output dim; 0 keeps the input feature dim.
  int conv_d_out = 0;
  LabelSource labels = LabelSource::Manifest;
  int classifier_steps = 300;
  double classifier_lr = 0.5;

  bool operator==(const AdapterConfig&) const = default;
};

struct DecodeConfig {
  int beam = 2;
  int max_len = 64;
  double length_penalty = 0.0;

  bool operator==(const DecodeConfig&) const = default;
};

/// Everything a run needs. Text form is INI: sections [model] [adapter] [lora]
/// [train] [decode]; `to_ini` writes every key with its value.
struct PipelineConfig {
  int precision = 64;  // 64 or 32
  /// 0 = take from the first feature file.
  int feature_dim = 0;
  LmConfig lm;  // vocab_size comes from the training manifest
  LmInit init;
  std::uint64_t init_seed = 1;
  AdapterConfig adapter;
  LoraConfig lora;
  TrainConfig train;
  DecodeConfig decode;

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

PipelineConfig parse_config(const std::string& ini_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string to_ini(const PipelineConfig& cfg);

/// Applies "section.key=value" on top of `cfg`. Call validate() once all
/// overrides are in.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

/// FNV-1a over the fields that fix tensor shapes and their meaning.
std::uint64_t architecture_hash(const PipelineConfig& cfg);

std::string to_string(AdapterKind kind);

}  // namespace stllm
