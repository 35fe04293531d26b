#pragma once

#include <cstddef>
#include <vector>

#include "stllm/eval/wer.hpp"

namespace stllm::eval {

/// Ordered segments of words; segments may be empty.
using SegmentedDoc = std::vector<Words>;

struct Resegmentation {
  SegmentedDoc segments;
  /// boundaries[i] is the hypothesis index where segment i starts; size |refs| + 1.
  std::vector<std::size_t> boundaries;
  /// Sum of per-segment word edit distances.
  long cost = 0;
};

/// Splits `hyp` into exactly |refs| contiguous, possibly empty chunks that
/// minimize the summed edit distance to the reference segments. Among optimal
/// splits the lexicographically earliest boundary vector wins.
///
/// The minimum equals the edit distance between `hyp` and the concatenated
/// references, since any alignment crosses every reference boundary at some
/// hypothesis position. Suffix costs at the reference boundaries are kept, and
/// boundaries are then chosen left to right; O(|hyp| * N_ref) time,
/// O(|hyp| * |refs|) memory.
Resegmentation mwer_resegment(const Words& hyp, const SegmentedDoc& refs);

}  // namespace stllm::eval
