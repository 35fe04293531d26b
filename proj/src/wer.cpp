#include "stllm/eval/wer.hpp"

#include <algorithm>

#include "stllm/errors.hpp"

namespace stllm::eval {

long edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<long> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    long diag = row[0];
    row[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const long up = row[j];
      row[j] = std::min({diag + (a[i - 1] == b[j - 1] ? 0 : 1), up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[b.size()];
}

WerBreakdown align_counts(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<long> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> long& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1, at(i, j - 1) + 1});

  WerBreakdown w;
  w.ref_words = static_cast<long>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++w.substitutions;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++w.deletions;
      --i;
    } else {
      ++w.insertions;
      --j;
    }
  }
  return w;
}

WerBreakdown word_wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw EmptyInputError("word_wer: empty reference");
  return align_counts(ref, hyp);
}

}  // namespace stllm::eval
