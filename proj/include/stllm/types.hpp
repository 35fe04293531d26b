#pragma once

#include <Eigen/Dense>

namespace stllm {

using Index = Eigen::Index;

/// Dense row-major matrix. Frame sequences are T x d with one frame per row.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// T x d encoder hidden states (frame axis x feature axis).
template <typename Scalar>
using FeatureSequence = Mat<Scalar>;

using FeatureSequencef = FeatureSequence<float>;
using FeatureSequenced = FeatureSequence<double>;

}  // namespace stllm
