#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "stllm/types.hpp"

namespace stllm {

/// Portable random stream: std::mt19937_64 (whose output sequence is fixed by
/// the C++ standard) with explicitly defined transforms, so draws are identical
/// across standard libraries.
///   uniform()  = (x >> 11) * 2^-53
///   below(n)   = rejection sampling on x mod n
///   normal()   = Box-Muller, cosine branch, one value per two uniforms
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "stllm-rng/1 (mt19937_64, box-muller)";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  std::uint64_t below(std::uint64_t n);
  /// Inclusive range [lo, hi].
  int range(int lo, int hi);
  double normal();

  template <typename Scalar>
  void fill_normal(Mat<Scalar>& m, double stddev) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(stddev * normal());
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stllm
