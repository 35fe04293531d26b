#pragma once

#include <span>
#include <string>
#include <vector>

namespace stllm::eval {

using Words = std::vector<std::string>;

struct WerBreakdown {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_words = 0;

  long errors() const { return substitutions + deletions + insertions; }
  /// (S + D + I) / N_ref; may exceed 1.
  double wer() const { return static_cast<double>(errors()) / static_cast<double>(ref_words); }

  WerBreakdown& operator+=(const WerBreakdown& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_words += o.ref_words;
    return *this;
  }
  bool operator==(const WerBreakdown&) const = default;
};

/// Unit-cost word edit distance.
long edit_distance(std::span<const std::string> a, std::span<const std::string> b);

/// Counts from one minimal alignment; on ties the backtrace prefers
/// substitution/match, then deletion, then insertion. Accepts an empty reference.
WerBreakdown align_counts(std::span<const std::string> ref, std::span<const std::string> hyp);

/// As align_counts, but an empty reference is an error.
WerBreakdown word_wer(std::span<const std::string> ref, std::span<const std::string> hyp);

}  // namespace stllm::eval
