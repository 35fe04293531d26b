#pragma once

#include <string>
#include <vector>

#include "stllm/eval/bleu.hpp"
#include "stllm/eval/reseg.hpp"
#include "stllm/eval/wer.hpp"

namespace stllm::eval {

struct AsrScore {
  WerBreakdown wer;
  Resegmentation reseg;
};

/// LPW on both sides, minimum-WER resegmentation of the hypothesis word
/// stream onto the reference segments, then WER summed over segments.
AsrScore score_asr(const std::vector<std::string>& hyp_doc, const std::vector<std::string>& ref_doc);

/// Translation scoring keeps case and punctuation.
BleuResult score_st(const std::vector<std::string>& hyp_doc, const std::vector<std::string>& ref_doc, BleuMode mode,
                    Smoothing smoothing = Smoothing::Exp);

}  // namespace stllm::eval
