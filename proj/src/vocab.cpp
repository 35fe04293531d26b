#include "stllm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "stllm/errors.hpp"

namespace stllm {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

Vocabulary Vocabulary::build(std::vector<std::string> words) {
  const std::set<std::string> reserved = {std::string(kBosToken), std::string(kEosToken), std::string(kAudioSep),
                                          std::string(kTranscriptSep), std::string(kTranslationSep)};
  std::erase_if(words, [&](const std::string& w) { return reserved.contains(w); });
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  std::vector<std::string> tokens = {std::string(kBosToken), std::string(kEosToken), std::string(kAudioSep),
                                     std::string(kTranscriptSep), std::string(kTranslationSep)};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (int i = 0; i < v.size(); ++i) {
    const std::string& t = v.tokens_[static_cast<std::size_t>(i)];
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
      throw FormatError(FormatError::Kind::Parse, "vocabulary: token " + std::to_string(i) + " is empty or has whitespace");
    if (!v.index_.emplace(t, i).second)
      throw FormatError(FormatError::Kind::Parse, "vocabulary: duplicate token '" + t + "'");
  }
  auto reserved = [&](std::string_view name) {
    const auto it = v.index_.find(std::string(name));
    if (it == v.index_.end())
      throw FormatError(FormatError::Kind::Parse, "vocabulary: missing reserved token " + std::string(name));
    return it->second;
  };
  v.bos_ = reserved(kBosToken);
  v.eos_ = reserved(kEosToken);
  v.audio_ = reserved(kAudioSep);
  v.transcript_ = reserved(kTranscriptSep);
  v.translation_ = reserved(kTranslationSep);
  return v;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
  out << to_text();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open vocabulary: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) throw Error("vocabulary: unknown token '" + std::string(token) + "'");
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

}  // namespace stllm
