#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>

#include "stllm/errors.hpp"
#include "stllm/types.hpp"

namespace stllm {

struct TrainConfig {
  double peak_lr = 1e-4;
  int warmup_steps = 10;
  int total_steps = 3000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int batch_size = 2;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(peak_lr >= 0.0)) throw ConfigError("train: peak_lr must be >= 0");
    if (warmup_steps < 0 || warmup_steps >= total_steps)
      throw ConfigError("train: need 0 <= warmup_steps < total_steps");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0 && weight_decay >= 0))
      throw ConfigError("train: invalid AdamW constants");
  }
  bool operator==(const TrainConfig&) const = default;
};

/// Linear warmup to `peak_lr` over `warmup_steps`, then half-cosine decay to 0
/// at `total_steps`.
inline double lr_at_step(const TrainConfig& cfg, int step) {
  if (step < 0 || step > cfg.total_steps)
    throw ConfigError("lr_at_step: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(cfg.total_steps) + "]");
  if (step <= cfg.warmup_steps)
    return cfg.warmup_steps == 0 ? cfg.peak_lr : cfg.peak_lr * step / cfg.warmup_steps;
  const double progress =
      static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Per-tensor AdamW moments, keyed by tensor name.
template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, Mat<Scalar>> m;
  std::map<std::string, Mat<Scalar>> v;
};

/// One decoupled-weight-decay Adam update with bias correction. `t` is the
/// 1-based step count after incrementing.
template <typename Scalar>
void adamw_update(Mat<Scalar>& param, const Mat<Scalar>& grad, Mat<Scalar>& m, Mat<Scalar>& v, std::int64_t t,
                  double lr, const TrainConfig& cfg, bool decay) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) throw ShapeError("adamw: gradient shape mismatch");
  if (!grad.allFinite()) throw NonFiniteError("adamw: non-finite gradient");
  if (m.size() == 0) m = Mat<Scalar>::Zero(param.rows(), param.cols());
  if (v.size() == 0) v = Mat<Scalar>::Zero(param.rows(), param.cols());
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const Scalar lr_s = static_cast<Scalar>(lr);
  if (decay) param *= Scalar(1) - static_cast<Scalar>(lr * cfg.weight_decay);
  param.array() -= lr_s * (m.array() / static_cast<Scalar>(c1)) /
                   ((v.array() / static_cast<Scalar>(c2)).sqrt() + static_cast<Scalar>(cfg.eps));
}

}  // namespace stllm
