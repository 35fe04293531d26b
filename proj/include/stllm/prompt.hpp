#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stllm/errors.hpp"
#include "stllm/types.hpp"
#include "stllm/vocab.hpp"

namespace stllm {

/// Marks an input position filled from the audio embeddings.
inline constexpr int kAudioSlot = -1;
/// Target of a position whose prediction is never scored.
inline constexpr int kNoTarget = -1;

/// Token layout of one prompt:
///   <bos> <>audio<> {audio} <>transcript<> {transcript} <>translation<> {translation} <eos>
/// target_ids[t] is the token predicted at position t (input_ids[t + 1]).
struct PromptLayout {
  std::vector<int> input_ids;
  std::vector<int> target_ids;
  std::vector<std::uint8_t> loss_mask;
  Index audio_begin = 0;
  Index audio_len = 0;
  Index transcript_begin = 0;
  Index transcript_len = 0;
  Index translation_begin = 0;
  Index translation_len = 0;

  Index length() const { return static_cast<Index>(input_ids.size()); }
  Index mask_count() const;
};

/// Fused input sequence for the language model: audio rows come from the
/// projected audio embeddings, all other rows from the token table.
template <typename Scalar>
struct PromptSample {
  PromptLayout layout;
  Mat<Scalar> embed_seq;
};

PromptLayout training_layout(Index audio_len, std::span<const int> transcript_ids,
                             std::span<const int> translation_ids, const Vocabulary& vocab);

/// Training layout truncated right after <>transcript<>; all masks false.
PromptLayout inference_layout(Index audio_len, const Vocabulary& vocab);

template <typename Scalar>
Mat<Scalar> embed_layout(const PromptLayout& layout, const Mat<Scalar>& audio_emb, const Mat<Scalar>& token_table) {
  if (audio_emb.rows() != layout.audio_len) throw ShapeError("embed_layout: audio length mismatch");
  if (audio_emb.cols() != token_table.cols())
    throw ShapeError("embed_layout: audio dim " + std::to_string(audio_emb.cols()) + " vs model dim " +
                     std::to_string(token_table.cols()));
  Mat<Scalar> out(layout.length(), token_table.cols());
  for (Index t = 0; t < layout.length(); ++t) {
    const int id = layout.input_ids[static_cast<std::size_t>(t)];
    if (id == kAudioSlot)
      out.row(t) = audio_emb.row(t - layout.audio_begin);
    else
      out.row(t) = token_table.row(id);
  }
  return out;
}

template <typename Scalar>
PromptSample<Scalar> assemble_training_sample(const Mat<Scalar>& audio_emb, std::span<const int> transcript_ids,
                                              std::span<const int> translation_ids, const Vocabulary& vocab,
                                              const Mat<Scalar>& token_table) {
  PromptSample<Scalar> s;
  s.layout = training_layout(audio_emb.rows(), transcript_ids, translation_ids, vocab);
  s.embed_seq = embed_layout(s.layout, audio_emb, token_table);
  return s;
}

template <typename Scalar>
Mat<Scalar> assemble_inference_prompt(const Mat<Scalar>& audio_emb, const Vocabulary& vocab,
                                      const Mat<Scalar>& token_table) {
  return embed_layout(inference_layout(audio_emb.rows(), vocab), audio_emb, token_table);
}

struct SplitOutput {
  std::string transcript;
  std::string translation;
};

/// Splits post-prompt generation at the first <>translation<>; the translation
/// ends at the first <eos> or the end of the ids. Throws MalformedOutputError
/// when the separator is missing.
SplitOutput split_output(std::span<const int> generated_ids, const Vocabulary& vocab);

}  // namespace stllm
