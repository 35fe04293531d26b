#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "stllm/errors.hpp"
#include "stllm/prompt.hpp"
#include "stllm/rng.hpp"
#include "stllm/types.hpp"

namespace stllm {

// Decoder-only causal LM: learned absolute positions, pre-RMSNorm blocks with
// multi-head causal self-attention and a GELU feed-forward, untied or tied head.
// Row-vector convention throughout: Y = X * W with W stored d_in x d_out.

struct LmConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_positions = 128;
  bool tied_head = false;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("lm: vocab_size must be >= 2");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("lm: d_model must be a positive multiple of n_heads");
    if (n_layers < 0 || n_layers > 4) throw ConfigError("lm: n_layers must be in [0, 4]");
    if (d_ff < 1 || max_positions < 1) throw ConfigError("lm: d_ff and max_positions must be positive");
  }
  bool operator==(const LmConfig&) const = default;
};

/// Low-rank adaptation: W_eff = W + (alpha / rank) * A * B with A: d_in x r,
/// B: r x d_out and B zero at initialization.
struct LoraConfig {
  bool enabled = false;
  int rank = 8;
  double alpha = 8.0;
  std::set<std::string> targets = {"wq", "wk", "wv", "wo", "w1", "w2"};
  /// Std of the Gaussian A init; 0 means 1/sqrt(d_in).
  double init_std = 0.0;
  /// Freeze every base LM tensor, not only the adapted matrices.
  bool freeze_all = false;

  double scale() const { return alpha / static_cast<double>(rank); }
  bool operator==(const LoraConfig&) const = default;
};

template <typename Scalar>
struct LoraAdapter {
  Mat<Scalar> a;
  Mat<Scalar> b;
};

template <typename Scalar>
Mat<Scalar> lora_effective_weight(const Mat<Scalar>& w, const LoraConfig& cfg, const Mat<Scalar>& a,
                                  const Mat<Scalar>& b) {
  if (cfg.rank < 1) throw ConfigError("lora: rank must be >= 1");
  if (cfg.rank > std::min(w.rows(), w.cols()))
    throw ShapeError("lora: rank " + std::to_string(cfg.rank) + " exceeds weight dimensions " +
                     std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  if (a.rows() != w.rows() || a.cols() != cfg.rank || b.rows() != cfg.rank || b.cols() != w.cols())
    throw ShapeError("lora: adapter shapes do not match weight and rank");
  return w + static_cast<Scalar>(cfg.scale()) * (a * b);
}

template <typename Scalar>
struct LayerParams {
  Mat<Scalar> attn_norm;  // 1 x d
  Mat<Scalar> wq, wk, wv, wo;
  Mat<Scalar> ffn_norm;  // 1 x d
  Mat<Scalar> w1, b1, w2, b2;
  std::map<std::string, LoraAdapter<Scalar>> lora;

  Mat<Scalar>& weight(const std::string& name) {
    if (name == "wq") return wq;
    if (name == "wk") return wk;
    if (name == "wv") return wv;
    if (name == "wo") return wo;
    if (name == "w1") return w1;
    if (name == "w2") return w2;
    throw ConfigError("lora: unknown target '" + name + "'");
  }
  const Mat<Scalar>& weight(const std::string& name) const { return const_cast<LayerParams*>(this)->weight(name); }
};

template <typename Scalar>
struct LmParams {
  LmConfig config;
  LoraConfig lora;
  Mat<Scalar> tok_emb;  // V x d
  Mat<Scalar> pos_emb;  // P x d
  std::vector<LayerParams<Scalar>> layers;
  Mat<Scalar> final_norm;  // 1 x d
  Mat<Scalar> head;        // d x V, empty when tied
};

/// What a tensor is, for weight decay and freezing decisions.
enum class TensorRole { Weight, Vector, Embedding, LoraA, LoraB };

/// Visits every tensor with a stable dotted name. Order is fixed by structure.
template <typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  f("tok_emb", p.tok_emb, TensorRole::Embedding);
  f("pos_emb", p.pos_emb, TensorRole::Embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    f(pre + "attn_norm", L.attn_norm, TensorRole::Vector);
    f(pre + "wq", L.wq, TensorRole::Weight);
    f(pre + "wk", L.wk, TensorRole::Weight);
    f(pre + "wv", L.wv, TensorRole::Weight);
    f(pre + "wo", L.wo, TensorRole::Weight);
    f(pre + "ffn_norm", L.ffn_norm, TensorRole::Vector);
    f(pre + "w1", L.w1, TensorRole::Weight);
    f(pre + "b1", L.b1, TensorRole::Vector);
    f(pre + "w2", L.w2, TensorRole::Weight);
    f(pre + "b2", L.b2, TensorRole::Vector);
    for (auto& [target, ad] : L.lora) {
      f(pre + "lora." + target + ".a", ad.a, TensorRole::LoraA);
      f(pre + "lora." + target + ".b", ad.b, TensorRole::LoraB);
    }
  }
  f("final_norm", p.final_norm, TensorRole::Vector);
  if (!p.config.tied_head) f("head", p.head, TensorRole::Weight);
}

/// True when the named tensor is a base weight frozen by low-rank mode.
inline bool frozen_by_lora(const LoraConfig& lora, const std::string& name) {
  if (!lora.enabled) return false;
  if (name.find(".lora.") != std::string::npos) return false;
  if (lora.freeze_all) return true;
  const auto dot = name.rfind('.');
  if (dot == std::string::npos || name.rfind("layer", 0) != 0 || name.find(".lora.") != std::string::npos)
    return false;
  return lora.targets.contains(name.substr(dot + 1));
}

struct LmInit {
  double embedding_std = 0.5;
  double head_std = 0.02;

  bool operator==(const LmInit&) const = default;
};

template <typename Scalar>
void attach_lora(LmParams<Scalar>& p, const LoraConfig& lora, Rng& rng) {
  p.lora = lora;
  for (auto& L : p.layers) {
    L.lora.clear();
    if (!lora.enabled) continue;
    for (const auto& target : lora.targets) {
      const Mat<Scalar>& w = L.weight(target);
      if (lora.rank < 1 || lora.rank > std::min(w.rows(), w.cols()))
        throw ShapeError("lora: rank " + std::to_string(lora.rank) + " exceeds dimensions of " + target);
      LoraAdapter<Scalar> ad{Mat<Scalar>(w.rows(), lora.rank), Mat<Scalar>::Zero(lora.rank, w.cols())};
      rng.fill_normal(ad.a, lora.init_std > 0 ? lora.init_std : 1.0 / std::sqrt(static_cast<double>(w.rows())));
      L.lora.emplace(target, std::move(ad));
    }
  }
}

template <typename Scalar>
LmParams<Scalar> init_lm(const LmConfig& cfg, Rng& rng, const LmInit& init = {}) {
  cfg.validate();
  const Index d = cfg.d_model, V = cfg.vocab_size, F = cfg.d_ff;
  LmParams<Scalar> p;
  p.config = cfg;
  auto normal = [&](Index r, Index c, double std) {
    Mat<Scalar> m(r, c);
    rng.fill_normal(m, std);
    return m;
  };
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_sd = sd / std::sqrt(2.0 * std::max(1, cfg.n_layers));
  p.tok_emb = normal(V, d, init.embedding_std);
  p.pos_emb = normal(cfg.max_positions, d, init.embedding_std);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerParams<Scalar> L;
    L.attn_norm = Mat<Scalar>::Ones(1, d);
    L.wq = normal(d, d, sd);
    L.wk = normal(d, d, sd);
    L.wv = normal(d, d, sd);
    L.wo = normal(d, d, out_sd);
    L.ffn_norm = Mat<Scalar>::Ones(1, d);
    L.w1 = normal(d, F, sd);
    L.b1 = Mat<Scalar>::Zero(1, F);
    L.w2 = normal(F, d, out_sd * std::sqrt(static_cast<double>(d) / static_cast<double>(F)));
    L.b2 = Mat<Scalar>::Zero(1, d);
    p.layers.push_back(std::move(L));
  }
  p.final_norm = Mat<Scalar>::Ones(1, d);
  if (!cfg.tied_head) p.head = normal(d, V, init.head_std);
  return p;
}

/// Same structure as `p` with every tensor zeroed.
template <typename Scalar>
LmParams<Scalar> zeros_like(const LmParams<Scalar>& p) {
  LmParams<Scalar> z = p;
  for_each_tensor(z, [](const std::string&, Mat<Scalar>& t, TensorRole) { t.setZero(); });
  return z;
}

namespace detail {

inline constexpr double kRmsEps = 1e-5;

template <typename Scalar>
struct RmsOut {
  Mat<Scalar> y;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv;
};

template <typename Scalar>
RmsOut<Scalar> rms_norm(const Mat<Scalar>& x, const Mat<Scalar>& gain) {
  RmsOut<Scalar> r;
  const Scalar d = static_cast<Scalar>(x.cols());
  r.inv = ((x.array().square().rowwise().sum() / d) + static_cast<Scalar>(kRmsEps)).rsqrt();
  r.y = (x.array().colwise() * r.inv.array()).rowwise() * gain.row(0).array();
  return r;
}

// Accumulates d(gain) and returns d(x).
template <typename Scalar>
Mat<Scalar> rms_norm_backward(const Mat<Scalar>& x, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& inv,
                              const Mat<Scalar>& gain, const Mat<Scalar>& dy, Mat<Scalar>& dgain) {
  const Scalar d = static_cast<Scalar>(x.cols());
  const Mat<Scalar> xhat = x.array().colwise() * inv.array();
  dgain += (xhat.array() * dy.array()).colwise().sum().matrix();
  const Mat<Scalar> u = dy.array().rowwise() * gain.row(0).array();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ux = (u.array() * x.array()).rowwise().sum();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> coef = inv.array().cube() * ux.array() / d;
  return (u.array().colwise() * inv.array()) - (x.array().colwise() * coef.array());
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + Scalar(0.044715) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
  const Scalar t = std::tanh(c * (x + Scalar(0.044715) * x * x * x));
  return Scalar(0.5) * (Scalar(1) + t) +
         Scalar(0.5) * x * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
}

template <typename Scalar>
struct LayerCache {
  Mat<Scalar> x_in;
  RmsOut<Scalar> n1;
  Mat<Scalar> wq, wk, wv, wo, w1, w2;  // effective weights
  Mat<Scalar> q, k, v;
  std::vector<Mat<Scalar>> probs;  // per head, L x L
  Mat<Scalar> attn_concat;
  Mat<Scalar> x1;
  RmsOut<Scalar> n2;
  Mat<Scalar> pre_act, act;
};

template <typename Scalar>
Mat<Scalar> effective(const LayerParams<Scalar>& L, const LoraConfig& lora, const std::string& name) {
  const auto it = L.lora.find(name);
  if (!lora.enabled || it == L.lora.end()) return L.weight(name);
  return lora_effective_weight(L.weight(name), lora, it->second.a, it->second.b);
}

}  // namespace detail

template <typename Scalar>
struct ForwardCache {
  Mat<Scalar> x0;
  std::vector<detail::LayerCache<Scalar>> layers;
  Mat<Scalar> x_final;
  detail::RmsOut<Scalar> nf;
  Mat<Scalar> logits;
};

template <typename Scalar>
ForwardCache<Scalar> lm_forward_cached(const LmParams<Scalar>& p, const Mat<Scalar>& embed_seq) {
  using namespace detail;
  const LmConfig& cfg = p.config;
  const Index L = embed_seq.rows(), d = cfg.d_model;
  if (embed_seq.cols() != d)
    throw ShapeError("lm_forward: embedding dim " + std::to_string(embed_seq.cols()) + " vs d_model " +
                     std::to_string(d));
  if (L < 1) throw EmptyInputError("lm_forward: empty sequence");
  if (L > cfg.max_positions)
    throw ShapeError("lm_forward: sequence length " + std::to_string(L) + " exceeds max_positions " +
                     std::to_string(cfg.max_positions));

  ForwardCache<Scalar> c;
  c.x0 = embed_seq + p.pos_emb.topRows(L);
  Mat<Scalar> x = c.x0;
  const Index H = cfg.n_heads, dh = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  for (const auto& P : p.layers) {
    LayerCache<Scalar> lc;
    lc.x_in = x;
    lc.wq = effective(P, p.lora, "wq");
    lc.wk = effective(P, p.lora, "wk");
    lc.wv = effective(P, p.lora, "wv");
    lc.wo = effective(P, p.lora, "wo");
    lc.w1 = effective(P, p.lora, "w1");
    lc.w2 = effective(P, p.lora, "w2");

    lc.n1 = rms_norm(x, P.attn_norm);
    lc.q = lc.n1.y * lc.wq;
    lc.k = lc.n1.y * lc.wk;
    lc.v = lc.n1.y * lc.wv;
    lc.attn_concat.resize(L, d);
    for (Index h = 0; h < H; ++h) {
      Mat<Scalar> s = (lc.q.middleCols(h * dh, dh) * lc.k.middleCols(h * dh, dh).transpose()) * scale;
      Mat<Scalar> a = Mat<Scalar>::Zero(L, L);
      for (Index t = 0; t < L; ++t) {
        const auto row = s.row(t).head(t + 1);
        const Scalar m = row.maxCoeff();
        a.row(t).head(t + 1) = (row.array() - m).exp();
        a.row(t).head(t + 1) /= a.row(t).head(t + 1).sum();
      }
      lc.attn_concat.middleCols(h * dh, dh) = a * lc.v.middleCols(h * dh, dh);
      lc.probs.push_back(std::move(a));
    }
    lc.x1 = x + lc.attn_concat * lc.wo;

    lc.n2 = rms_norm(lc.x1, P.ffn_norm);
    lc.pre_act = lc.n2.y * lc.w1;
    lc.pre_act.rowwise() += P.b1.row(0);
    lc.act = lc.pre_act.unaryExpr([](Scalar v) { return gelu(v); });
    x = lc.x1 + lc.act * lc.w2;
    x.rowwise() += P.b2.row(0);
    c.layers.push_back(std::move(lc));
  }

  c.x_final = x;
  c.nf = rms_norm(x, p.final_norm);
  c.logits = cfg.tied_head ? Mat<Scalar>(c.nf.y * p.tok_emb.transpose()) : Mat<Scalar>(c.nf.y * p.head);
  if (!c.logits.allFinite()) throw NonFiniteError("lm_forward: non-finite activations");
  return c;
}

/// Next-token logits, L x V. Row t depends only on rows 0..t of `embed_seq`.
template <typename Scalar>
Mat<Scalar> lm_forward(const LmParams<Scalar>& p, const Mat<Scalar>& embed_seq) {
  return lm_forward_cached(p, embed_seq).logits;
}

template <typename Scalar>
RowVec<Scalar> log_softmax_row(const Eigen::Ref<const RowVec<Scalar>>& row) {
  const Scalar m = row.maxCoeff();
  const Scalar lse = m + std::log((row.array() - m).exp().sum());
  return row.array() - lse;
}

template <typename Scalar>
Mat<Scalar> softmax_rows(const Mat<Scalar>& logits) {
  Mat<Scalar> out(logits.rows(), logits.cols());
  for (Index t = 0; t < logits.rows(); ++t) {
    const Scalar m = logits.row(t).maxCoeff();
    out.row(t) = (logits.row(t).array() - m).exp();
    out.row(t) /= out.row(t).sum();
  }
  return out;
}

/// Sum of negative log-likelihoods over mask-true positions (not averaged).
template <typename Scalar>
Scalar masked_nll_sum(const Mat<Scalar>& logits, const std::vector<int>& targets,
                      const std::vector<std::uint8_t>& mask) {
  if (static_cast<Index>(targets.size()) != logits.rows() || targets.size() != mask.size())
    throw ShapeError("masked_cross_entropy: targets/mask length mismatch");
  Scalar total = 0;
  for (Index t = 0; t < logits.rows(); ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    const int y = targets[static_cast<std::size_t>(t)];
    if (y < 0 || y >= logits.cols()) throw ShapeError("masked_cross_entropy: target id out of range");
    total -= log_softmax_row<Scalar>(logits.row(t))(y);
  }
  return total;
}

/// Mean negative log-likelihood over mask-true positions only.
template <typename Scalar>
Scalar masked_cross_entropy(const Mat<Scalar>& logits, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask) {
  const auto count = std::count(mask.begin(), mask.end(), std::uint8_t{1});
  if (count == 0) throw EmptyMaskError("masked_cross_entropy: no mask-true positions");
  return masked_nll_sum(logits, targets, mask) / static_cast<Scalar>(count);
}

/// d(loss)/d(logits) where loss = sum of masked NLL times `weight`.
template <typename Scalar>
Mat<Scalar> masked_nll_grad(const Mat<Scalar>& logits, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask, Scalar weight) {
  Mat<Scalar> g = Mat<Scalar>::Zero(logits.rows(), logits.cols());
  for (Index t = 0; t < logits.rows(); ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    g.row(t) = log_softmax_row<Scalar>(logits.row(t)).array().exp() * weight;
    g(t, targets[static_cast<std::size_t>(t)]) -= weight;
  }
  return g;
}

/// Backpropagates `dlogits` through a cached forward pass. Parameter gradients
/// are accumulated into `grads`; token-embedding rows referenced by
/// `input_ids` receive their share. Returns d(embed_seq), L x d.
template <typename Scalar>
Mat<Scalar> lm_backward_from_logits(const LmParams<Scalar>& p, const ForwardCache<Scalar>& c,
                                    const std::vector<int>& input_ids, const Mat<Scalar>& dlogits,
                                    LmParams<Scalar>& grads) {
  using namespace detail;
  const LmConfig& cfg = p.config;
  const Index L = c.x0.rows(), d = cfg.d_model, H = cfg.n_heads, dh = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  if (dlogits.rows() != L || dlogits.cols() != cfg.vocab_size) throw ShapeError("lm_backward: dlogits shape");
  if (static_cast<Index>(input_ids.size()) != L) throw ShapeError("lm_backward: input ids length mismatch");

  Mat<Scalar> dnf;
  if (cfg.tied_head) {
    grads.tok_emb += dlogits.transpose() * c.nf.y;
    dnf = dlogits * p.tok_emb;
  } else {
    grads.head += c.nf.y.transpose() * dlogits;
    dnf = dlogits * p.head.transpose();
  }
  Mat<Scalar> dx = rms_norm_backward(c.x_final, c.nf.inv, p.final_norm, dnf, grads.final_norm);

  // Gradient w.r.t. an effective weight, split into base and adapter parts.
  auto route = [&](const LayerParams<Scalar>& P, LayerParams<Scalar>& G, const std::string& name,
                   const Mat<Scalar>& dweff) {
    G.weight(name) += dweff;
    const auto it = P.lora.find(name);
    if (!p.lora.enabled || it == P.lora.end()) return;
    auto& ga = G.lora.at(name);
    const Scalar s = static_cast<Scalar>(p.lora.scale());
    ga.a += s * dweff * it->second.b.transpose();
    ga.b += s * it->second.a.transpose() * dweff;
  };

  for (Index l = static_cast<Index>(p.layers.size()) - 1; l >= 0; --l) {
    const auto& P = p.layers[static_cast<std::size_t>(l)];
    auto& G = grads.layers[static_cast<std::size_t>(l)];
    const auto& lc = c.layers[static_cast<std::size_t>(l)];

    // feed-forward
    G.b2 += dx.colwise().sum();
    route(P, G, "w2", lc.act.transpose() * dx);
    const Mat<Scalar> dact = dx * lc.w2.transpose();
    const Mat<Scalar> dpre = dact.array() * lc.pre_act.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    G.b1 += dpre.colwise().sum();
    route(P, G, "w1", lc.n2.y.transpose() * dpre);
    const Mat<Scalar> dn2 = dpre * lc.w1.transpose();
    Mat<Scalar> dx1 = dx + rms_norm_backward(lc.x1, lc.n2.inv, P.ffn_norm, dn2, G.ffn_norm);

    // attention
    route(P, G, "wo", lc.attn_concat.transpose() * dx1);
    const Mat<Scalar> dconcat = dx1 * lc.wo.transpose();
    Mat<Scalar> dq(L, d), dk(L, d), dv(L, d);
    for (Index h = 0; h < H; ++h) {
      const Mat<Scalar>& a = lc.probs[static_cast<std::size_t>(h)];
      const Mat<Scalar> dout = dconcat.middleCols(h * dh, dh);
      const Mat<Scalar> da = dout * lc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = a.transpose() * dout;
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rowdot = (da.array() * a.array()).rowwise().sum();
      const Mat<Scalar> ds = (a.array() * (da.array().colwise() - rowdot.array())) * scale;
      dq.middleCols(h * dh, dh) = ds * lc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * lc.q.middleCols(h * dh, dh);
    }
    route(P, G, "wq", lc.n1.y.transpose() * dq);
    route(P, G, "wk", lc.n1.y.transpose() * dk);
    route(P, G, "wv", lc.n1.y.transpose() * dv);
    const Mat<Scalar> dn1 = dq * lc.wq.transpose() + dk * lc.wk.transpose() + dv * lc.wv.transpose();
    dx = dx1 + rms_norm_backward(lc.x_in, lc.n1.inv, P.attn_norm, dn1, G.attn_norm);
  }

  grads.pos_emb.topRows(L) += dx;
  for (Index t = 0; t < L; ++t) {
    const int id = input_ids[static_cast<std::size_t>(t)];
    if (id >= 0) grads.tok_emb.row(id) += dx.row(t);
  }
  return dx;
}

template <typename Scalar>
struct LmGradient {
  Scalar loss = 0;
  LmParams<Scalar> params;
  /// d(loss)/d(embed_seq); audio rows feed the projection and adapter.
  Mat<Scalar> embed_seq;
};

/// Masked cross-entropy of one sample and its exact gradient. `loss_scale`
/// multiplies the averaged loss before differentiation.
template <typename Scalar>
LmGradient<Scalar> lm_backward(const LmParams<Scalar>& p, const PromptSample<Scalar>& sample,
                               Scalar loss_scale = Scalar(1)) {
  const auto count = sample.layout.mask_count();
  if (count == 0) throw EmptyMaskError("lm_backward: no mask-true positions");
  const ForwardCache<Scalar> c = lm_forward_cached(p, sample.embed_seq);
  LmGradient<Scalar> g;
  g.params = zeros_like(p);
  const Scalar w = loss_scale / static_cast<Scalar>(count);
  g.loss = masked_nll_sum(c.logits, sample.layout.target_ids, sample.layout.loss_mask) * w;
  const Mat<Scalar> dlogits = masked_nll_grad(c.logits, sample.layout.target_ids, sample.layout.loss_mask, w);
  g.embed_seq = lm_backward_from_logits(p, c, sample.layout.input_ids, dlogits, g.params);
  return g;
}

}  // namespace stllm
