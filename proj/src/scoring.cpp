#include "stllm/eval/scoring.hpp"

#include "stllm/errors.hpp"
#include "stllm/eval/lpw.hpp"
#include "stllm/vocab.hpp"

namespace stllm::eval {

AsrScore score_asr(const std::vector<std::string>& hyp_doc, const std::vector<std::string>& ref_doc) {
  if (ref_doc.empty()) throw EmptyInputError("score_asr: empty reference");
  Words hyp;
  for (const auto& seg : hyp_doc)
    for (auto& w : split_words(lpw_normalize(seg))) hyp.push_back(std::move(w));
  SegmentedDoc refs;
  for (const auto& seg : ref_doc) refs.push_back(split_words(lpw_normalize(seg)));

  AsrScore score;
  score.reseg = mwer_resegment(hyp, refs);
  for (std::size_t i = 0; i < refs.size(); ++i) score.wer += align_counts(refs[i], score.reseg.segments[i]);
  if (score.wer.ref_words == 0) throw EmptyInputError("score_asr: reference has no words after normalization");
  return score;
}

BleuResult score_st(const std::vector<std::string>& hyp_doc, const std::vector<std::string>& ref_doc, BleuMode mode,
                    Smoothing smoothing) {
  if (ref_doc.empty()) throw EmptyInputError("score_st: empty reference");
  return bleu_corpus(hyp_doc, ref_doc, mode, smoothing);
}

}  // namespace stllm::eval
