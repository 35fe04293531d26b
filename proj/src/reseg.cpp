#include "stllm/eval/reseg.hpp"

#include <algorithm>
#include <unordered_map>

#include "stllm/errors.hpp"

namespace stllm::eval {

Resegmentation mwer_resegment(const Words& hyp, const SegmentedDoc& refs) {
  if (refs.empty()) throw EmptyInputError("mwer_resegment: no reference segments");

  std::unordered_map<std::string, int> ids;
  auto intern = [&](const std::string& w) { return ids.emplace(w, static_cast<int>(ids.size())).first->second; };
  std::vector<int> h;
  for (const auto& w : hyp) h.push_back(intern(w));
  std::vector<int> r;
  std::vector<std::size_t> ref_start;
  for (const auto& seg : refs) {
    ref_start.push_back(r.size());
    for (const auto& w : seg) r.push_back(intern(w));
  }
  ref_start.push_back(r.size());

  const std::size_t n = h.size(), total_ref = r.size(), S = refs.size();

  // suffix[i][k] = edit distance between h[k..n) and r[ref_start[i]..N).
  std::vector<std::vector<long>> suffix(S + 1);
  std::vector<long> col(n + 1);
  for (std::size_t k = 0; k <= n; ++k) col[k] = static_cast<long>(n - k);
  std::size_t next_boundary = S;
  if (ref_start[next_boundary] == total_ref) {
    while (ref_start[next_boundary] == total_ref) {
      suffix[next_boundary] = col;
      if (next_boundary == 0) break;
      --next_boundary;
    }
  }
  for (std::size_t p = total_ref; p-- > 0;) {
    std::vector<long> prev = col;  // column p + 1
    col[n] = static_cast<long>(total_ref - p);
    for (std::size_t k = n; k-- > 0;)
      col[k] = std::min({prev[k + 1] + (h[k] == r[p] ? 0 : 1), col[k + 1] + 1, prev[k] + 1});
    while (ref_start[next_boundary] == p) {
      suffix[next_boundary] = col;
      if (next_boundary == 0) break;
      --next_boundary;
    }
  }

  Resegmentation out;
  out.cost = suffix[0][0];
  out.boundaries.push_back(0);
  long remaining = out.cost;
  std::size_t start = 0;
  for (std::size_t i = 0; i < S; ++i) {
    const std::size_t b = ref_start[i], m = ref_start[i + 1] - b;
    std::size_t end = n;
    long chunk_cost = 0;
    // row[j] = edit distance between h[start..k) and the first j words of ref i
    std::vector<long> row(m + 1);
    for (std::size_t j = 0; j <= m; ++j) row[j] = static_cast<long>(j);
    for (std::size_t k = start;; ++k) {
      if (i + 1 < S && row[m] + suffix[i + 1][k] == remaining) {
        end = k;
        chunk_cost = row[m];
        break;
      }
      if (k == n) {
        end = n;
        chunk_cost = row[m];
        break;
      }
      long diag = row[0];
      row[0] += 1;
      for (std::size_t j = 1; j <= m; ++j) {
        const long up = row[j];
        row[j] = std::min({diag + (h[k] == r[b + j - 1] ? 0 : 1), up + 1, row[j - 1] + 1});
        diag = up;
      }
    }
    out.segments.emplace_back(hyp.begin() + static_cast<std::ptrdiff_t>(start),
                              hyp.begin() + static_cast<std::ptrdiff_t>(end));
    out.boundaries.push_back(end);
    remaining -= chunk_cost;
    start = end;
  }
  return out;
}

}  // namespace stllm::eval
