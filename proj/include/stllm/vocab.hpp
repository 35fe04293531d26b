#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stllm {

inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kAudioSep = "<>audio<>";
inline constexpr std::string_view kTranscriptSep = "<>transcript<>";
inline constexpr std::string_view kTranslationSep = "<>translation<>";

/// Word-level vocabulary. Serialized as one token per line; id = line number.
class Vocabulary {
 public:
  /// Reserved tokens first (ids 0..4), then `words` deduplicated and sorted.
  static Vocabulary build(std::vector<std::string> words);
  /// Any token order; the five reserved tokens must be present exactly once.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Whitespace tokenization; unknown words throw.
  std::vector<int> encode(std::string_view text) const;
  /// Space-joined token strings.
  std::string decode(std::span<const int> ids) const;

  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int audio_sep() const { return audio_; }
  int transcript_sep() const { return transcript_; }
  int translation_sep() const { return translation_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int bos_ = -1, eos_ = -1, audio_ = -1, transcript_ = -1, translation_ = -1;
};

std::vector<std::string> split_words(std::string_view text);

}  // namespace stllm
