#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "stllm/types.hpp"

namespace stllm {

// A scorer maps the ids generated so far to next-token log-probabilities:
//   RowVec<double> scorer(std::span<const int> generated)

struct BeamHypothesis {
  std::vector<int> ids;  // generated ids; a finished hypothesis ends with eos
  double logprob = 0.0;
  bool finished = false;
};

struct DecodeResult {
  std::vector<int> ids;  // eos stripped
  double logprob = 0.0;
  bool finished = false;
};

namespace detail {

inline int argmax_smallest(const RowVec<double>& lp) {
  Index best = 0;
  for (Index v = 1; v < lp.size(); ++v)
    if (lp(v) > lp(best)) best = v;
  return static_cast<int>(best);
}

inline double length_norm(std::size_t len, double penalty) {
  return penalty == 0.0 ? 1.0 : std::pow((5.0 + static_cast<double>(len)) / 6.0, penalty);
}

inline DecodeResult strip(const BeamHypothesis& h) {
  DecodeResult r{h.ids, h.logprob, h.finished};
  if (h.finished) r.ids.pop_back();
  return r;
}

}  // namespace detail

/// Appends the argmax token (ties to the smaller id) until eos or `max_len`
/// generated tokens; eos counts toward `max_len` and is not returned.
template <typename Scorer>
DecodeResult greedy_decode(Scorer&& scorer, int eos_id, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  DecodeResult r;
  for (int step = 0; step < max_len; ++step) {
    const RowVec<double> lp = scorer(std::span<const int>(r.ids));
    const int best = detail::argmax_smallest(lp);
    r.logprob += lp(best);
    if (best == eos_id) {
      r.finished = true;
      break;
    }
    r.ids.push_back(best);
  }
  return r;
}

/// Beam search over cumulative log-probability. Finished hypotheses stay in
/// the pool and keep their slot; ranking ties go to the lexicographically
/// smaller id sequence. Returns the best finished hypothesis in the final
/// pool, else the best unfinished one. `length_penalty` > 0 ranks by
/// logprob / ((5 + len) / 6)^penalty instead.
template <typename Scorer>
DecodeResult beam_search(Scorer&& scorer, int eos_id, int beam_size, int max_len, double length_penalty = 0.0) {
  if (beam_size < 1) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");

  auto key = [&](const BeamHypothesis& h) { return h.logprob / detail::length_norm(h.ids.size(), length_penalty); };
  auto better = [&](const BeamHypothesis& a, const BeamHypothesis& b) {
    const double ka = key(a), kb = key(b);
    if (ka != kb) return ka > kb;
    return a.ids < b.ids;
  };

  std::vector<BeamHypothesis> pool{BeamHypothesis{}};
  for (int step = 0; step < max_len; ++step) {
    std::vector<BeamHypothesis> candidates;
    for (const auto& h : pool) {
      if (h.finished) {
        candidates.push_back(h);
        continue;
      }
      const RowVec<double> lp = scorer(std::span<const int>(h.ids));
      for (Index v = 0; v < lp.size(); ++v) {
        BeamHypothesis next = h;
        next.ids.push_back(static_cast<int>(v));
        next.logprob += lp(v);
        next.finished = v == eos_id;
        candidates.push_back(std::move(next));
      }
    }
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(beam_size), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);
    candidates.resize(keep);
    pool = std::move(candidates);
    if (std::all_of(pool.begin(), pool.end(), [](const BeamHypothesis& h) { return h.finished; })) break;
  }

  const auto fin = std::find_if(pool.begin(), pool.end(), [](const BeamHypothesis& h) { return h.finished; });
  return detail::strip(fin != pool.end() ? *fin : pool.front());
}

}  // namespace stllm
