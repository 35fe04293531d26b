// Independent reference implementations used by the unit tests and the
// acceptance binary. Each one favours the most literal construction over
// speed and shares no code with the library routine it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stllm/rng.hpp"
#include "stllm/types.hpp"

namespace oracle {

using stllm::Index;
template <typename S>
using Mat = stllm::Mat<S>;

/// Groups frames by scanning for label changes one frame at a time and
/// averages each group with a running sum.
inline Mat<double> collapse(const Mat<double>& seq, const std::vector<int>& labels, int blank, bool keep_blanks) {
  std::vector<std::vector<double>> rows;
  std::size_t t = 0;
  while (t < labels.size()) {
    std::size_t end = t;
    while (end < labels.size() && labels[end] == labels[t]) ++end;
    if (labels[t] != blank || keep_blanks) {
      std::vector<double> sum(static_cast<std::size_t>(seq.cols()), 0.0);
      for (std::size_t k = t; k < end; ++k)
        for (Index j = 0; j < seq.cols(); ++j) sum[static_cast<std::size_t>(j)] += seq(static_cast<Index>(k), j);
      for (double& v : sum) v /= static_cast<double>(end - t);
      rows.push_back(sum);
    }
    t = end;
  }
  Mat<double> out(static_cast<Index>(rows.size()), seq.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Index j = 0; j < seq.cols(); ++j) out(static_cast<Index>(r), j) = rows[r][static_cast<std::size_t>(j)];
  return out;
}

/// y[o, c] = b[c] + sum_{j<5} sum_i x[5o + j, i] * K[j*d_in + i, c], x zero past T.
inline Mat<double> conv(const Mat<double>& x, const Mat<double>& kernel, const Mat<double>& bias) {
  const Index T = x.rows(), d_in = x.cols(), d_out = kernel.cols();
  const Index n_out = (T + 4) / 5;
  Mat<double> y(n_out, d_out);
  for (Index o = 0; o < n_out; ++o)
    for (Index c = 0; c < d_out; ++c) {
      double acc = bias(0, c);
      for (Index j = 0; j < 5; ++j) {
        const Index t = 5 * o + j;
        if (t >= T) continue;
        for (Index i = 0; i < d_in; ++i) acc += x(t, i) * kernel(j * d_in + i, c);
      }
      y(o, c) = acc;
    }
  return y;
}

/// Unit-cost Levenshtein distance by memoised recursion on suffixes.
template <typename T>
int edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    int best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return memo[key] = best;
  };
  return go(0, 0);
}

struct Segmentation {
  int cost = 0;
  std::vector<std::size_t> boundaries;  // size S + 1, first 0, last n
};

/// Every non-decreasing boundary vector, in lexicographic order; keeps the
/// first one reaching the minimum.
inline Segmentation exhaustive_resegment(const std::vector<std::string>& hyp,
                                         const std::vector<std::vector<std::string>>& refs) {
  const std::size_t n = hyp.size(), S = refs.size();
  Segmentation best{std::numeric_limits<int>::max(), {}};
  std::vector<std::size_t> b(S + 1, 0);
  b[S] = n;
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == S) {
      int cost = 0;
      for (std::size_t s = 0; s < S; ++s) {
        const std::vector<std::string> piece(hyp.begin() + static_cast<std::ptrdiff_t>(b[s]),
                                             hyp.begin() + static_cast<std::ptrdiff_t>(b[s + 1]));
        cost += edit_distance(piece, refs[s]);
      }
      if (cost < best.cost) best = {cost, b};
      return;
    }
    for (std::size_t v = b[k - 1]; v <= n; ++v) {
      b[k] = v;
      rec(k + 1);
    }
  };
  rec(1);
  return best;
}

/// A toy autoregressive model: the logits of a prefix are drawn from a
/// stream seeded by hashing (model seed, prefix), so scores do not depend
/// on query order.
class ToyModel {
 public:
  ToyModel(int vocab, std::uint64_t seed, double scale = 2.0) : vocab_(vocab), seed_(seed), scale_(scale) {}

  stllm::RowVec<double> operator()(std::span<const int> prefix) const {
    std::uint64_t h = 1469598103934665603ull ^ seed_;
    for (int id : prefix) h = (h ^ static_cast<std::uint64_t>(id + 1)) * 1099511628211ull;
    stllm::Rng rng(h);
    stllm::RowVec<double> logits(vocab_);
    for (int v = 0; v < vocab_; ++v) logits(v) = scale_ * rng.normal();
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return (logits.array() - lse).matrix();
  }
  int vocab() const { return vocab_; }

 private:
  int vocab_;
  std::uint64_t seed_;
  double scale_;
};

struct Scored {
  std::vector<int> ids;  // includes eos when finished
  double logprob = 0.0;
  bool finished = false;
};

/// All sequences the decoder may emit: eos-terminated of length <= max_len
/// plus unterminated ones of exactly max_len.
template <typename Model>
std::vector<Scored> enumerate_sequences(Model& model, int eos, int max_len) {
  std::vector<Scored> out;
  std::function<void(Scored)> rec = [&](Scored s) {
    if (s.finished || static_cast<int>(s.ids.size()) == max_len) {
      out.push_back(s);
      return;
    }
    const stllm::RowVec<double> lp = model(std::span<const int>(s.ids));
    for (int v = 0; v < model.vocab(); ++v) {
      Scored n = s;
      n.ids.push_back(v);
      n.logprob += lp(v);
      n.finished = v == eos;
      rec(n);
    }
  };
  rec(Scored{});
  return out;
}

inline bool ranks_before(const Scored& a, const Scored& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.ids < b.ids;
}

/// Beam retention rule stated over the exhaustive sequence set: the pool at
/// depth t is the top-k of every enumerated sequence truncated to t whose
/// t-1 prefix was pooled, where finished members persist unchanged.
template <typename Model>
Scored beam_by_enumeration(Model& model, int eos, int beam, int max_len) {
  const std::vector<Scored> all = enumerate_sequences(model, eos, max_len);
  auto truncate = [&](const Scored& s, std::size_t t) {
    Scored p;
    const std::vector<int>& ids = s.ids;
    std::size_t len = std::min(t, ids.size());
    p.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(len));
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<int> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(i));
      p.logprob += model(std::span<const int>(prefix))(ids[i]);
    }
    p.finished = !p.ids.empty() && p.ids.back() == eos;
    return p;
  };
  std::vector<Scored> pool{Scored{}};
  for (int t = 1; t <= max_len; ++t) {
    std::vector<Scored> cands;
    for (const auto& s : all) {
      Scored p = truncate(s, static_cast<std::size_t>(t));
      const Scored parent = truncate(s, static_cast<std::size_t>(t - 1));
      const bool parent_pooled = std::any_of(pool.begin(), pool.end(), [&](const Scored& q) { return q.ids == parent.ids; });
      if (!parent_pooled) continue;
      if (parent.finished) p = parent;
      if (std::none_of(cands.begin(), cands.end(), [&](const Scored& q) { return q.ids == p.ids; })) cands.push_back(p);
    }
    std::sort(cands.begin(), cands.end(), ranks_before);
    if (static_cast<int>(cands.size()) > beam) cands.resize(static_cast<std::size_t>(beam));
    pool = cands;
    if (std::all_of(pool.begin(), pool.end(), [](const Scored& s) { return s.finished; })) break;
  }
  for (const auto& s : pool)
    if (s.finished) return s;
  return pool.front();
}

/// Highest-scoring finished sequence, else highest unfinished.
template <typename Model>
Scored global_best(Model& model, int eos, int max_len) {
  std::vector<Scored> all = enumerate_sequences(model, eos, max_len);
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.finished != b.finished) return a.finished;
    return ranks_before(a, b);
  });
  return all.front();
}

/// Central difference of f along direction `dir` at step h.
template <typename F>
double directional_fd(F&& loss_at, double h = 1e-5) {
  return (loss_at(h) - loss_at(-h)) / (2.0 * h);
}

inline double rel_err(double numeric, double analytic) {
  const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-12});
  return std::abs(numeric - analytic) / scale;
}

}  // namespace oracle
