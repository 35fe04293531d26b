#include "stllm/pipeline.hpp"

namespace stllm {

Vocabulary build_vocabulary(const Manifest& manifest) {
  std::vector<std::string> words;
  for (const auto& r : manifest.records) {
    for (auto& w : split_words(r.transcript)) words.push_back(std::move(w));
    if (r.translation)
      for (auto& w : split_words(*r.translation)) words.push_back(std::move(w));
  }
  return Vocabulary::build(std::move(words));
}

Index probe_feature_dim(const Manifest& manifest) {
  if (manifest.records.empty()) throw EmptyInputError("manifest has no records");
  return read_features(manifest.resolve(manifest.records.front())).cols();
}

}  // namespace stllm
