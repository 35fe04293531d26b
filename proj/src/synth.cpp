#include "stllm/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <system_error>
#include <unordered_map>

#include "stllm/errors.hpp"
#include "stllm/features.hpp"
#include "stllm/rng.hpp"

namespace stllm {
namespace {

std::string indexed_name(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%02d", prefix, i);
  return buf;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (vocab_size < 2 || vocab_size > 64) throw ConfigError("synth: vocab_size must be in [2, 64]");
  if (n_samples < 0) throw ConfigError("synth: n_samples must be >= 0");
  if (len_min < 1 || len_min > len_max) throw ConfigError("synth: need 1 <= len_min <= len_max");
  if (repeat_min < 1 || repeat_min > repeat_max) throw ConfigError("synth: need 1 <= repeat_min <= repeat_max");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be >= 0");
  if (dim < 1) throw ConfigError("synth: dim must be >= 1");
}

std::vector<std::string> substitute_and_reverse(const std::vector<std::string>& words,
                                                const std::vector<std::string>& source_words,
                                                const std::vector<std::string>& target_words,
                                                const std::vector<int>& mapping) {
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(source_words.size()); ++i) index.emplace(source_words[i], i);
  std::vector<std::string> out;
  out.reserve(words.size());
  for (auto it = words.rbegin(); it != words.rend(); ++it) {
    const auto found = index.find(*it);
    if (found == index.end()) throw Error("substitute_and_reverse: unknown word '" + *it + "'");
    out.push_back(target_words.at(mapping.at(found->second)));
  }
  return out;
}

SyntheticCorpus synthesize(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticCorpus corpus;

  for (int i = 0; i < spec.vocab_size; ++i) {
    corpus.source_words.push_back(indexed_name('s', i));
    corpus.target_words.push_back(indexed_name('t', i));
  }
  corpus.mapping.resize(spec.vocab_size);
  std::iota(corpus.mapping.begin(), corpus.mapping.end(), 0);
  for (int i = spec.vocab_size - 1; i > 0; --i)
    std::swap(corpus.mapping[i], corpus.mapping[rng.below(static_cast<std::uint64_t>(i) + 1)]);

  Mat<double> prototypes(spec.vocab_size, spec.dim);
  rng.fill_normal(prototypes, 1.0);

  for (int n = 0; n < spec.n_samples; ++n) {
    SyntheticSample s;
    const int length = rng.range(spec.len_min, spec.len_max);
    // No immediate repeats: a CTC labeling cannot separate adjacent identical
    // tokens without a blank frame between them.
    for (int i = 0; i < length; ++i) {
      int tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.vocab_size - (i > 0 ? 1 : 0))));
      if (i > 0 && tok >= s.tokens.back()) ++tok;
      s.tokens.push_back(tok);
    }
    for (int i = 0; i < length; ++i) s.repeats.push_back(rng.range(spec.repeat_min, spec.repeat_max));

    const int frames = std::accumulate(s.repeats.begin(), s.repeats.end(), 0);
    s.features.resize(frames, spec.dim);
    std::vector<int> labels;
    labels.reserve(frames);
    Index row = 0;
    for (int i = 0; i < length; ++i) {
      for (int k = 0; k < s.repeats[i]; ++k, ++row) {
        for (int j = 0; j < spec.dim; ++j)
          s.features(row, j) = static_cast<float>(prototypes(s.tokens[i], j) + spec.noise_sigma * rng.normal());
        labels.push_back(s.tokens[i] + 1);
      }
    }

    std::vector<std::string> words;
    for (int t : s.tokens) words.push_back(corpus.source_words[t]);
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05d", n);
    s.record.id = id;
    s.record.features_path = "features/" + s.record.id + ".stfz";
    s.record.transcript = join(words);
    s.record.translation =
        join(substitute_and_reverse(words, corpus.source_words, corpus.target_words, corpus.mapping));
    s.record.frame_labels = std::move(labels);
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

Manifest synth_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  const SyntheticCorpus corpus = synthesize(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "features", ec);
  if (ec) throw FormatError(FormatError::Kind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  Manifest m;
  m.base_dir = out_dir;
  for (const auto& s : corpus.samples) {
    write_features(s.features, out_dir / s.record.features_path);
    m.records.push_back(s.record);
  }
  write_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace stllm
