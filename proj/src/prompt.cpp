#include "stllm/prompt.hpp"

#include <algorithm>

namespace stllm {

Index PromptLayout::mask_count() const {
  return static_cast<Index>(std::count(loss_mask.begin(), loss_mask.end(), std::uint8_t{1}));
}

namespace {

void check_ids(std::span<const int> ids, const Vocabulary& vocab, const char* what) {
  for (int id : ids)
    if (id < 0 || id >= vocab.size()) throw ShapeError(std::string("prompt: ") + what + " id out of range");
}

}  // namespace

PromptLayout training_layout(Index audio_len, std::span<const int> transcript_ids,
                             std::span<const int> translation_ids, const Vocabulary& vocab) {
  if (audio_len < 1) throw EmptyInputError("prompt: audio embedding sequence is empty");
  if (transcript_ids.empty()) throw EmptyInputError("prompt: empty transcript");
  if (translation_ids.empty()) throw EmptyInputError("prompt: empty translation");
  check_ids(transcript_ids, vocab, "transcript");
  check_ids(translation_ids, vocab, "translation");

  PromptLayout p;
  auto& ids = p.input_ids;
  ids.push_back(vocab.bos());
  ids.push_back(vocab.audio_sep());
  p.audio_begin = static_cast<Index>(ids.size());
  p.audio_len = audio_len;
  ids.insert(ids.end(), static_cast<std::size_t>(audio_len), kAudioSlot);
  ids.push_back(vocab.transcript_sep());
  const Index transcript_sep_pos = static_cast<Index>(ids.size()) - 1;
  p.transcript_begin = static_cast<Index>(ids.size());
  p.transcript_len = static_cast<Index>(transcript_ids.size());
  ids.insert(ids.end(), transcript_ids.begin(), transcript_ids.end());
  ids.push_back(vocab.translation_sep());
  p.translation_begin = static_cast<Index>(ids.size());
  p.translation_len = static_cast<Index>(translation_ids.size());
  ids.insert(ids.end(), translation_ids.begin(), translation_ids.end());
  ids.push_back(vocab.eos());

  const std::size_t length = ids.size();
  p.target_ids.assign(length, kNoTarget);
  p.loss_mask.assign(length, 0);
  for (std::size_t t = 0; t + 1 < length; ++t) {
    const int next = ids[t + 1];
    if (next != kAudioSlot) p.target_ids[t] = next;
    // Scored: every token after <>transcript<>, i.e. predictions made at the
    // separator itself and beyond, up to and including <eos>.
    if (static_cast<Index>(t) >= transcript_sep_pos) p.loss_mask[t] = 1;
  }
  return p;
}

PromptLayout inference_layout(Index audio_len, const Vocabulary& vocab) {
  if (audio_len < 1) throw EmptyInputError("prompt: audio embedding sequence is empty");
  PromptLayout p;
  p.input_ids = {vocab.bos(), vocab.audio_sep()};
  p.audio_begin = 2;
  p.audio_len = audio_len;
  p.input_ids.insert(p.input_ids.end(), static_cast<std::size_t>(audio_len), kAudioSlot);
  p.input_ids.push_back(vocab.transcript_sep());
  p.transcript_begin = static_cast<Index>(p.input_ids.size());
  p.target_ids.assign(p.input_ids.size(), kNoTarget);
  p.loss_mask.assign(p.input_ids.size(), 0);
  return p;
}

SplitOutput split_output(std::span<const int> generated_ids, const Vocabulary& vocab) {
  const auto sep = std::find(generated_ids.begin(), generated_ids.end(), vocab.translation_sep());
  const auto eos_before = std::find(generated_ids.begin(), sep, vocab.eos());
  if (sep == generated_ids.end() || eos_before != sep) {
    throw MalformedOutputError("generated output has no " + std::string(kTranslationSep) + " separator",
                               vocab.decode(std::span<const int>(generated_ids.begin(), eos_before)));
  }
  const auto tail = std::span<const int>(sep + 1, generated_ids.end());
  const auto end = std::find(tail.begin(), tail.end(), vocab.eos());
  return {vocab.decode(std::span<const int>(generated_ids.begin(), sep)),
          vocab.decode(std::span<const int>(tail.begin(), end))};
}

}  // namespace stllm
