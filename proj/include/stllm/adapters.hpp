#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stllm/errors.hpp"
#include "stllm/rng.hpp"
#include "stllm/types.hpp"

namespace stllm {

struct FrameLabels {
  std::vector<int> labels;
  int blank_id = 0;
};

/// A maximal run of identical frame labels.
struct LabelRun {
  int label;
  Index begin;
  Index length;
};

/// Per-frame argmax of CTC logits (T x V); ties go to the smaller id.
template <typename Derived>
FrameLabels ctc_greedy_labels(const Eigen::MatrixBase<Derived>& logits, int blank_id) {
  if (logits.rows() == 0) throw EmptyInputError("ctc_greedy_labels: empty frame sequence");
  if (logits.cols() < 2) throw ShapeError("ctc_greedy_labels: need at least 2 labels");
  if (blank_id < 0 || blank_id >= logits.cols()) throw ShapeError("ctc_greedy_labels: blank id out of range");
  if (!logits.allFinite()) throw NonFiniteError("ctc_greedy_labels: non-finite logits");
  FrameLabels out;
  out.blank_id = blank_id;
  out.labels.reserve(static_cast<std::size_t>(logits.rows()));
  for (Index t = 0; t < logits.rows(); ++t) {
    Index best = 0;
    for (Index v = 1; v < logits.cols(); ++v)
      if (logits(t, v) > logits(t, best)) best = v;
    out.labels.push_back(static_cast<int>(best));
  }
  return out;
}

inline std::vector<LabelRun> label_runs(const std::vector<int>& labels) {
  std::vector<LabelRun> runs;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (runs.empty() || runs.back().label != labels[t])
      runs.push_back({labels[t], static_cast<Index>(t), 1});
    else
      ++runs.back().length;
  }
  return runs;
}

/// Replaces each maximal run of identically labelled frames by the mean of its
/// frames. Blank runs are dropped unless `keep_blanks`.
template <typename Scalar>
FeatureSequence<Scalar> ctc_collapse(const FeatureSequence<Scalar>& seq, const FrameLabels& labels,
                                     bool keep_blanks = false) {
  if (static_cast<Index>(labels.labels.size()) != seq.rows())
    throw ShapeError("ctc_collapse: " + std::to_string(labels.labels.size()) + " labels for " +
                     std::to_string(seq.rows()) + " frames");
  std::vector<LabelRun> runs = label_runs(labels.labels);
  if (!keep_blanks) std::erase_if(runs, [&](const LabelRun& r) { return r.label == labels.blank_id; });
  if (runs.empty()) throw EmptyCollapseError("ctc_collapse: every frame is blank");

  FeatureSequence<Scalar> out(static_cast<Index>(runs.size()), seq.cols());
  for (std::size_t i = 0; i < runs.size(); ++i)
    out.row(static_cast<Index>(i)) =
        seq.middleRows(runs[i].begin, runs[i].length).colwise().sum() / static_cast<Scalar>(runs[i].length);
  return out;
}

/// Strided 1-D convolution over frames, width 5 and stride 5. The kernel is
/// stored as (5 * d_in) x d_out with tap j occupying rows [j*d_in, (j+1)*d_in).
template <typename Scalar>
struct ConvAdapterParams {
  static constexpr Index kWidth = 5;
  static constexpr Index kStride = 5;

  Mat<Scalar> kernel;
  Mat<Scalar> bias;  // 1 x d_out

  Index d_in() const { return kernel.rows() / kWidth; }
  Index d_out() const { return kernel.cols(); }
  auto tap(Index j) { return kernel.middleRows(j * d_in(), d_in()); }
  auto tap(Index j) const { return kernel.middleRows(j * d_in(), d_in()); }

  static ConvAdapterParams zeros(Index d_in, Index d_out) {
    return {Mat<Scalar>::Zero(kWidth * d_in, d_out), Mat<Scalar>::Zero(1, d_out)};
  }
  static ConvAdapterParams random(Index d_in, Index d_out, Rng& rng) {
    ConvAdapterParams p = zeros(d_in, d_out);
    rng.fill_normal(p.kernel, 1.0 / std::sqrt(static_cast<double>(kWidth * d_in)));
    return p;
  }
};

template <typename Scalar>
struct ConvAdapterGrads {
  FeatureSequence<Scalar> input;
  ConvAdapterParams<Scalar> params;
};

inline Index conv_output_length(Index frames) {
  return (frames + ConvAdapterParams<double>::kStride - 1) / ConvAdapterParams<double>::kStride;
}

namespace detail {

// Zero-pads to a multiple of the stride and views each window as one row.
template <typename Scalar>
Mat<Scalar> conv_windows(const FeatureSequence<Scalar>& seq) {
  constexpr Index k = ConvAdapterParams<Scalar>::kWidth;
  const Index out_len = conv_output_length(seq.rows());
  Mat<Scalar> padded = Mat<Scalar>::Zero(out_len * k, seq.cols());
  padded.topRows(seq.rows()) = seq;
  return Eigen::Map<const Mat<Scalar>>(padded.data(), out_len, k * seq.cols());
}

}  // namespace detail

template <typename Scalar>
FeatureSequence<Scalar> conv_forward(const FeatureSequence<Scalar>& seq, const ConvAdapterParams<Scalar>& p) {
  if (seq.cols() != p.d_in() || p.kernel.rows() != p.kWidth * p.d_in() || p.bias.cols() != p.d_out())
    throw ShapeError("conv_forward: input dim " + std::to_string(seq.cols()) + " vs kernel d_in " +
                     std::to_string(p.d_in()));
  if (seq.rows() == 0) throw EmptyInputError("conv_forward: empty frame sequence");
  FeatureSequence<Scalar> out = detail::conv_windows(seq) * p.kernel;
  out.rowwise() += p.bias.row(0);
  return out;
}

template <typename Scalar>
ConvAdapterGrads<Scalar> conv_backward(const FeatureSequence<Scalar>& seq, const ConvAdapterParams<Scalar>& p,
                                       const Mat<Scalar>& upstream) {
  if (seq.cols() != p.d_in()) throw ShapeError("conv_backward: input dim mismatch");
  if (upstream.rows() != conv_output_length(seq.rows()) || upstream.cols() != p.d_out())
    throw ShapeError("conv_backward: upstream gradient shape mismatch");
  ConvAdapterGrads<Scalar> g;
  g.params.kernel = detail::conv_windows(seq).transpose() * upstream;
  g.params.bias = upstream.colwise().sum();
  const Mat<Scalar> dwindows = upstream * p.kernel.transpose();
  // Padded rows are dropped: the gradient covers the T real frames only.
  g.input = Eigen::Map<const Mat<Scalar>>(dwindows.data(), dwindows.rows() * p.kWidth, p.d_in()).topRows(seq.rows());
  return g;
}

/// Per-frame affine map d_enc -> d_model, no activation.
template <typename Scalar>
struct ProjectionParams {
  Mat<Scalar> weight;  // d_enc x d_model
  Mat<Scalar> bias;  // 1 x d_out

  Index d_in() const { return weight.rows(); }
  Index d_out() const { return weight.cols(); }

  static ProjectionParams zeros(Index d_in, Index d_out) {
    return {Mat<Scalar>::Zero(d_in, d_out), Mat<Scalar>::Zero(1, d_out)};
  }
  static ProjectionParams random(Index d_in, Index d_out, Rng& rng) {
    ProjectionParams p = zeros(d_in, d_out);
    rng.fill_normal(p.weight, 1.0 / std::sqrt(static_cast<double>(d_in)));
    return p;
  }
};

template <typename Scalar>
struct ProjectionGrads {
  FeatureSequence<Scalar> input;
  ProjectionParams<Scalar> params;
};

template <typename Scalar>
FeatureSequence<Scalar> projection_forward(const FeatureSequence<Scalar>& seq, const ProjectionParams<Scalar>& p) {
  if (seq.cols() != p.d_in() || p.bias.cols() != p.d_out())
    throw ShapeError("projection_forward: input dim " + std::to_string(seq.cols()) + " vs " +
                     std::to_string(p.d_in()));
  FeatureSequence<Scalar> out = seq * p.weight;
  out.rowwise() += p.bias.row(0);
  return out;
}

template <typename Scalar>
ProjectionGrads<Scalar> projection_backward(const FeatureSequence<Scalar>& seq, const ProjectionParams<Scalar>& p,
                                            const Mat<Scalar>& upstream) {
  if (seq.cols() != p.d_in()) throw ShapeError("projection_backward: input dim mismatch");
  if (upstream.rows() != seq.rows() || upstream.cols() != p.d_out())
    throw ShapeError("projection_backward: upstream gradient shape mismatch");
  return {upstream * p.weight.transpose(), {seq.transpose() * upstream, upstream.colwise().sum()}};
}

}  // namespace stllm
