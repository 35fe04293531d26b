#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "stllm/eval/wer.hpp"

namespace stllm::eval {

inline constexpr int kBleuOrder = 4;

enum class BleuMode { DocAsWhole, Resegmented };
enum class Smoothing { Exp, None };

/// Splits on whitespace and isolates every category-P code point as its own token.
Words bleu_tokenize(std::string_view text);

struct BleuStats {
  std::array<long, kBleuOrder> matches{};
  std::array<long, kBleuOrder> totals{};
  long hyp_len = 0;
  long ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
};

struct BleuResult {
  double score = 0.0;  // 0..100
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 1.0;
  long hyp_len = 0;
  long ref_len = 0;
};

/// Clipped n-gram matches and hypothesis n-gram totals for one segment pair.
BleuStats segment_stats(const Words& hyp, const Words& ref);

/// Geometric mean of modified precisions times exp(1 - r/c) when c < r.
///   - no unigram matches: score 0
///   - an order with no hypothesis n-grams is left out of the mean
///   - Exp: the k-th order with zero matches counts as 1 / (2^k * total)
///   - None: any order with zero matches gives score 0
BleuResult compute_bleu(const BleuStats& stats, Smoothing smoothing = Smoothing::Exp);

/// Segment-wise corpus BLEU over aligned segments; counts must agree.
BleuResult bleu_segments(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                         Smoothing smoothing = Smoothing::Exp);

/// DocAsWhole concatenates each side into one segment. Resegmented first
/// splits the hypothesis word stream to the reference segments by minimum
/// WER, then scores segment-wise.
BleuResult bleu_corpus(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, BleuMode mode,
                       Smoothing smoothing = Smoothing::Exp);

}  // namespace stllm::eval
