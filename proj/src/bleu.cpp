#include "stllm/eval/bleu.hpp"

#include <cmath>
#include <map>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "stllm/errors.hpp"
#include "stllm/eval/lpw.hpp"
#include "stllm/eval/reseg.hpp"
#include "stllm/vocab.hpp"

namespace stllm::eval {

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int n = 0; n < kBleuOrder; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

Words bleu_tokenize(std::string_view text) {
  Words out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 cp;
    U8_NEXT(s, i, length, cp);
    const std::string_view bytes = text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start));
    if (cp >= 0 && u_isUWhiteSpace(cp)) {
      flush();
    } else if (cp >= 0 && is_punctuation(static_cast<char32_t>(cp))) {
      flush();
      out.emplace_back(bytes);
    } else {
      current += bytes;
    }
  }
  flush();
  return out;
}

namespace {

std::map<std::vector<std::string>, long> ngram_counts(const Words& words, std::size_t n) {
  std::map<std::vector<std::string>, long> counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

std::string join(const Words& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

BleuStats segment_stats(const Words& hyp, const Words& ref) {
  BleuStats s;
  s.hyp_len = static_cast<long>(hyp.size());
  s.ref_len = static_cast<long>(ref.size());
  for (int n = 1; n <= kBleuOrder; ++n) {
    const auto h = ngram_counts(hyp, static_cast<std::size_t>(n));
    const auto r = ngram_counts(ref, static_cast<std::size_t>(n));
    for (const auto& [gram, count] : h) {
      s.totals[n - 1] += count;
      const auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += std::min(count, it->second);
    }
  }
  return s;
}

BleuResult compute_bleu(const BleuStats& stats, Smoothing smoothing) {
  BleuResult res;
  res.hyp_len = stats.hyp_len;
  res.ref_len = stats.ref_len;
  if (stats.hyp_len == 0 || stats.matches[0] == 0) return res;
  res.brevity_penalty =
      stats.hyp_len < stats.ref_len
          ? std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len))
          : 1.0;

  double log_sum = 0.0;
  int orders = 0;
  double smooth = 1.0;
  for (int n = 0; n < kBleuOrder; ++n) {
    if (stats.totals[n] == 0) break;
    double p;
    if (stats.matches[n] > 0) {
      p = static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
    } else if (smoothing == Smoothing::Exp) {
      smooth *= 2.0;
      p = 1.0 / (smooth * static_cast<double>(stats.totals[n]));
    } else {
      return res;
    }
    res.precisions[n] = p;
    log_sum += std::log(p);
    ++orders;
  }
  res.score = 100.0 * res.brevity_penalty * std::exp(log_sum / orders);
  return res;
}

BleuResult bleu_segments(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                         Smoothing smoothing) {
  if (hyp.size() != ref.size())
    throw EvalMismatchError("bleu: " + std::to_string(hyp.size()) + " hypothesis segments vs " +
                            std::to_string(ref.size()) + " reference segments");
  BleuStats total;
  for (std::size_t i = 0; i < hyp.size(); ++i) total += segment_stats(bleu_tokenize(hyp[i]), bleu_tokenize(ref[i]));
  if (total.ref_len == 0) throw EmptyInputError("bleu: empty reference corpus");
  return compute_bleu(total, smoothing);
}

BleuResult bleu_corpus(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, BleuMode mode,
                       Smoothing smoothing) {
  if (ref.empty()) throw EmptyInputError("bleu: empty reference corpus");
  if (mode == BleuMode::DocAsWhole) {
    std::string h, r;
    for (const auto& s : hyp) h += s + ' ';
    for (const auto& s : ref) r += s + ' ';
    return bleu_segments({h}, {r}, smoothing);
  }
  Words words;
  for (const auto& s : hyp)
    for (auto& w : split_words(s)) words.push_back(std::move(w));
  SegmentedDoc refs;
  for (const auto& s : ref) refs.push_back(split_words(s));
  const Resegmentation reseg = mwer_resegment(words, refs);
  std::vector<std::string> hyp_segments;
  for (const auto& seg : reseg.segments) hyp_segments.push_back(join(seg));
  return bleu_segments(hyp_segments, ref, smoothing);
}

}  // namespace stllm::eval
