#include <doctest.h>

#include "oracles.hpp"
#include "stllm/microlm.hpp"
#include "stllm/optim.hpp"

using namespace stllm;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = Vocabulary::build({"a", "b", "c", "x", "y", "z"});
  return v;
}

LmConfig small_config(bool tied = false) {
  LmConfig c;
  c.vocab_size = vocab().size();
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 12;
  c.max_positions = 24;
  c.tied_head = tied;
  return c;
}

// Random model with non-trivial norms, biases and (optionally) adapters so no
// gradient path is degenerate.
LmParams<double> random_model(Rng& rng, bool tied, bool lora) {
  LmParams<double> p = init_lm<double>(small_config(tied), rng, LmInit{0.5, 0.3});
  auto jitter = [&](Mat<double>& m, double base, double std) {
    Mat<double> n(m.rows(), m.cols());
    rng.fill_normal(n, std);
    m = (n.array() + base).matrix();
  };
  for (auto& L : p.layers) {
    jitter(L.attn_norm, 1.0, 0.3);
    jitter(L.ffn_norm, 1.0, 0.3);
    jitter(L.b1, 0.0, 0.1);
    jitter(L.b2, 0.0, 0.1);
  }
  jitter(p.final_norm, 1.0, 0.3);
  if (lora) {
    LoraConfig lc;
    lc.enabled = true;
    lc.rank = 2;
    lc.alpha = 3;
    attach_lora(p, lc, rng);
    for (auto& L : p.layers)
      for (auto& [name, ad] : L.lora) rng.fill_normal(ad.b, 0.3);
  }
  return p;
}

struct Sample {
  Mat<double> audio;
  std::vector<int> transcript, translation;
};

Sample random_sample(Rng& rng) {
  Sample s;
  s.audio.resize(rng.range(1, 4), 8);
  rng.fill_normal(s.audio, 1.0);
  for (int i = rng.range(1, 3); i > 0; --i) s.transcript.push_back(rng.range(5, vocab().size() - 1));
  for (int i = rng.range(1, 3); i > 0; --i) s.translation.push_back(rng.range(5, vocab().size() - 1));
  return s;
}

double sample_loss(const LmParams<double>& p, const Sample& s, const Mat<double>& audio) {
  const auto ps = assemble_training_sample<double>(audio, s.transcript, s.translation, vocab(), p.tok_emb);
  return masked_cross_entropy(lm_forward(p, ps.embed_seq), ps.layout.target_ids, ps.layout.loss_mask);
}

// Tensor of `p` selected by group name ("wq" picks a random layer).
Mat<double>& pick(LmParams<double>& p, const std::string& group, std::size_t layer) {
  if (group == "tok_emb") return p.tok_emb;
  if (group == "pos_emb") return p.pos_emb;
  if (group == "final_norm") return p.final_norm;
  if (group == "head") return p.head;
  auto& L = p.layers[layer];
  if (group == "attn_norm") return L.attn_norm;
  if (group == "ffn_norm") return L.ffn_norm;
  if (group == "b1") return L.b1;
  if (group == "b2") return L.b2;
  if (group.rfind("lora.", 0) == 0) {
    auto& ad = L.lora.at(group.substr(5, 2));
    return group.back() == 'a' ? ad.a : ad.b;
  }
  return L.weight(group);
}

}  // namespace

TEST_CASE("lm_backward: central finite differences for every parameter group") {
  const std::vector<std::string> groups{"tok_emb", "pos_emb", "attn_norm", "wq", "wk", "wv", "wo", "ffn_norm",
                                        "w1", "b1", "w2", "b2", "final_norm", "head", "tied_tok_emb", "audio",
                                        "lora.wq.a", "lora.wq.b", "lora.wk.a", "lora.wk.b", "lora.wv.a", "lora.wv.b",
                                        "lora.wo.a", "lora.wo.b", "lora.w1.a", "lora.w1.b", "lora.w2.a", "lora.w2.b"};
  Rng rng(31);
  for (const auto& group : groups) {
    double worst = 0;
    for (int instance = 0; instance < 50; ++instance) {
      const bool tied = group == "tied_tok_emb" || (group != "head" && instance % 3 == 0);
      const bool lora = group.rfind("lora.", 0) == 0 || instance % 2 == 1;
      LmParams<double> p = random_model(rng, tied, lora);
      const Sample s = random_sample(rng);
      const auto ps = assemble_training_sample<double>(s.audio, s.transcript, s.translation, vocab(), p.tok_emb);
      const LmGradient<double> g = lm_backward(p, ps);
      CHECK(g.loss == doctest::Approx(sample_loss(p, s, s.audio)).epsilon(1e-12));

      const std::size_t layer = rng.below(p.layers.size());
      double numeric = 0, analytic = 0;
      if (group == "audio") {
        Mat<double> dir(s.audio.rows(), s.audio.cols());
        rng.fill_normal(dir, 1.0);
        numeric = oracle::directional_fd([&](double h) { return sample_loss(p, s, s.audio + h * dir); });
        analytic = (g.embed_seq.middleRows(ps.layout.audio_begin, ps.layout.audio_len).array() * dir.array()).sum();
      } else {
        const std::string name = group == "tied_tok_emb" ? "tok_emb" : group;
        Mat<double>& t = pick(p, name, layer);
        const Mat<double>& gt = pick(const_cast<LmParams<double>&>(g.params), name, layer);
        Mat<double> dir(t.rows(), t.cols());
        rng.fill_normal(dir, 1.0);
        const Mat<double> saved = t;
        numeric = oracle::directional_fd([&](double h) {
          t = saved + h * dir;
          return sample_loss(p, s, s.audio);
        });
        t = saved;
        analytic = (gt.array() * dir.array()).sum();
      }
      worst = std::max(worst, oracle::rel_err(numeric, analytic));
    }
    INFO("group " << group);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("lm_backward: scaling the loss scales every gradient") {
  Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    LmParams<double> p = random_model(rng, trial % 2 == 0, true);
    const Sample s = random_sample(rng);
    const auto ps = assemble_training_sample<double>(s.audio, s.transcript, s.translation, vocab(), p.tok_emb);
    LmGradient<double> g1 = lm_backward(p, ps, 1.0), g2 = lm_backward(p, ps, 2.0);
    CHECK(g2.loss == 2 * g1.loss);
    CHECK(g2.embed_seq == 2 * g1.embed_seq);
    std::vector<Mat<double>*> a, b;
    for_each_tensor(g1.params, [&](const std::string&, Mat<double>& t, TensorRole) { a.push_back(&t); });
    for_each_tensor(g2.params, [&](const std::string&, Mat<double>& t, TensorRole) { b.push_back(&t); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*b[i] == 2 * *a[i]);
  }
}

TEST_CASE("lm_forward: causal, normalized, deterministic") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const LmParams<double> p = random_model(rng, trial % 2 == 0, trial % 3 == 0);
    const Index L = rng.range(2, 16);
    Mat<double> x(L, 8);
    rng.fill_normal(x, 1.0);
    const Mat<double> logits = lm_forward(p, x);
    CHECK(lm_forward(p, x) == logits);
    const Mat<double> probs = softmax_rows(logits);
    for (Index t = 0; t < L; ++t) CHECK(std::abs(probs.row(t).sum() - 1.0) < 1e-9);
    for (Index t = 0; t + 1 < L; ++t) {
      Mat<double> y = x;
      Mat<double> noise(L - t - 1, 8);
      rng.fill_normal(noise, 5.0);
      y.bottomRows(L - t - 1) = noise;
      CHECK(lm_forward(p, y).topRows(t + 1) == logits.topRows(t + 1));
    }
  }
}

TEST_CASE("lm_forward: errors") {
  Rng rng(34);
  const LmParams<double> p = random_model(rng, false, false);
  CHECK_THROWS_AS(lm_forward<double>(p, Mat<double>::Zero(3, 7)), ShapeError);
  CHECK_THROWS_AS(lm_forward<double>(p, Mat<double>::Zero(25, 8)), ShapeError);
  Mat<double> bad = Mat<double>::Zero(3, 8);
  bad(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(lm_forward<double>(p, bad), NonFiniteError);
}

TEST_CASE("masked cross-entropy: analytic and direct-summation oracles") {
  const int V = 13;
  Mat<double> zeros = Mat<double>::Zero(4, V);
  const std::vector<int> targets{1, 2, 3, 4};
  CHECK(masked_cross_entropy(zeros, targets, {1, 0, 1, 1}) == doctest::Approx(std::log(13.0)).epsilon(1e-15));
  CHECK_THROWS_AS(masked_cross_entropy(zeros, targets, {0, 0, 0, 0}), EmptyMaskError);
  CHECK_THROWS_AS(masked_cross_entropy(zeros, {1, 99, 3, 4}, {1, 1, 1, 1}), ShapeError);

  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const Index L = rng.range(1, 10);
    Mat<double> logits(L, V);
    rng.fill_normal(logits, 3.0);
    std::vector<int> y;
    std::vector<std::uint8_t> mask;
    for (Index t = 0; t < L; ++t) {
      y.push_back(rng.range(0, V - 1));
      mask.push_back(static_cast<std::uint8_t>(rng.below(2)));
    }
    mask[0] = 1;
    double sum = 0;
    int count = 0;
    for (Index t = 0; t < L; ++t) {
      if (!mask[static_cast<std::size_t>(t)]) continue;
      double z = 0;
      for (int v = 0; v < V; ++v) z += std::exp(logits(t, v));
      sum += std::log(z) - logits(t, y[static_cast<std::size_t>(t)]);
      ++count;
    }
    CHECK(std::abs(masked_cross_entropy(logits, y, mask) - sum / count) < 1e-9);
  }
}

TEST_CASE("lora: zero B is the base model bit for bit; dense oracle; scale") {
  Rng rng(36);
  LmConfig cfg = small_config();
  Rng a(5), b(5);
  const LmParams<double> base = init_lm<double>(cfg, a);
  LmParams<double> adapted = init_lm<double>(cfg, b);
  LoraConfig lc;
  lc.enabled = true;
  lc.rank = 8;
  lc.alpha = 8;
  CHECK(lc.scale() == 1.0);
  attach_lora(adapted, lc, rng);
  Mat<double> x(6, 8);
  rng.fill_normal(x, 1.0);
  CHECK(lm_forward(adapted, x) == lm_forward(base, x));

  for (int trial = 0; trial < 50; ++trial) {
    const Index din = rng.range(2, 9), dout = rng.range(2, 9);
    LoraConfig c;
    c.rank = rng.range(1, static_cast<int>(std::min(din, dout)));
    c.alpha = rng.normal() * 4;
    Mat<double> w(din, dout), A(din, c.rank), B(c.rank, dout);
    rng.fill_normal(w, 1.0);
    rng.fill_normal(A, 1.0);
    rng.fill_normal(B, 1.0);
    const Mat<double> got = lora_effective_weight(w, c, A, B);
    for (Index i = 0; i < din; ++i)
      for (Index j = 0; j < dout; ++j) {
        double acc = 0;
        for (int k = 0; k < c.rank; ++k) acc += A(i, k) * B(k, j);
        CHECK(std::abs(got(i, j) - (w(i, j) + c.alpha / c.rank * acc)) < 1e-9);
      }
  }
  LoraConfig big;
  big.rank = 9;
  CHECK_THROWS_AS(lora_effective_weight<double>(Mat<double>::Zero(8, 8), big, Mat<double>::Zero(8, 9),
                                                Mat<double>::Zero(9, 8)),
                  ShapeError);
  LmParams<double> p = init_lm<double>(cfg, rng);
  CHECK_THROWS_AS(attach_lora(p, [] { LoraConfig c; c.enabled = true; c.rank = 9; return c; }(), rng), ShapeError);
}

TEST_CASE("lora: frozen set") {
  LoraConfig lc;
  CHECK_FALSE(frozen_by_lora(lc, "layer0.wq"));
  lc.enabled = true;
  lc.targets = {"wq", "w1"};
  CHECK(frozen_by_lora(lc, "layer0.wq"));
  CHECK(frozen_by_lora(lc, "layer1.w1"));
  CHECK_FALSE(frozen_by_lora(lc, "layer0.wk"));
  CHECK_FALSE(frozen_by_lora(lc, "layer0.lora.wq.a"));
  CHECK_FALSE(frozen_by_lora(lc, "tok_emb"));
  CHECK_FALSE(frozen_by_lora(lc, "head"));
  lc.freeze_all = true;
  for (const char* name : {"tok_emb", "pos_emb", "head", "final_norm", "layer0.attn_norm", "layer1.b2", "layer0.wk"})
    CHECK(frozen_by_lora(lc, name));
  CHECK_FALSE(frozen_by_lora(lc, "layer0.lora.wq.b"));
}

TEST_CASE("lr schedule") {
  TrainConfig c;
  c.total_steps = 110;
  CHECK(lr_at_step(c, 0) == 0.0);
  CHECK(lr_at_step(c, 10) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at_step(c, 5) == doctest::Approx(0.5e-4).epsilon(1e-15));
  CHECK(lr_at_step(c, 60) == doctest::Approx(0.5e-4).epsilon(1e-12));
  CHECK(lr_at_step(c, 110) == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(std::abs(lr_at_step(c, 11) - lr_at_step(c, 10)) < 1e-7);
  for (int s = 0; s <= 110; ++s) CHECK(lr_at_step(c, s) >= 0.0);
  for (int s = 11; s <= 110; ++s) CHECK(lr_at_step(c, s) <= lr_at_step(c, s - 1));
  CHECK_THROWS_AS(lr_at_step(c, -1), ConfigError);
  CHECK_THROWS_AS(lr_at_step(c, 111), ConfigError);
  c.warmup_steps = 110;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adamw: closed-form single step, decay, zero gradient") {
  TrainConfig c;
  c.weight_decay = 0.01;
  Mat<double> p = Mat<double>::Constant(1, 1, 2.0), m, v;
  adamw_update(p, Mat<double>(Mat<double>::Constant(1, 1, 0.5)), m, v, 1, 1e-3, c, true);
  // m = 0.05, v = 0.00025; bias-corrected 0.5 and 0.25; step 1e-3 * 0.5 / (0.5 + 1e-8).
  CHECK(m(0, 0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(v(0, 0) == doctest::Approx(0.00025).epsilon(1e-15));
  const double expect = 2.0 * (1 - 1e-3 * 0.01) - 1e-3 * 0.5 / (0.5 + 1e-8);
  CHECK(std::abs(p(0, 0) - expect) < 1e-15);

  // Second step with the same gradient, no decay.
  const double m2 = 0.9 * 0.05 + 0.1 * 0.5, v2 = 0.999 * 0.00025 + 0.001 * 0.25;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  const double before = p(0, 0);
  adamw_update(p, Mat<double>(Mat<double>::Constant(1, 1, 0.5)), m, v, 2, 1e-3, c, false);
  CHECK(std::abs(p(0, 0) - (before - 1e-3 * mh / (std::sqrt(vh) + 1e-8))) < 1e-15);

  Rng rng(37);
  Mat<double> w(3, 4), m0, v0;
  rng.fill_normal(w, 1.0);
  const Mat<double> w_before = w;
  TrainConfig nodecay;
  nodecay.weight_decay = 0;
  adamw_update(w, Mat<double>(Mat<double>::Zero(3, 4)), m0, v0, 1, 1e-2, nodecay, true);
  CHECK(w == w_before);
  adamw_update(w, Mat<double>(Mat<double>::Zero(3, 4)), m0, v0, 2, 1e-2, c, true);
  CHECK((w - w_before * (1 - 1e-2 * 0.01)).cwiseAbs().maxCoeff() < 1e-15);

  Mat<double> nan = Mat<double>::Zero(3, 4);
  nan(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adamw_update(w, nan, m0, v0, 3, 1e-2, c, true), NonFiniteError);
}

TEST_CASE("float mode tracks double") {
  Rng rng(38);
  const LmParams<double> p = random_model(rng, false, true);
  LmParams<float> pf;
  pf.config = p.config;
  pf.lora = p.lora;
  pf.tok_emb = p.tok_emb.cast<float>();
  pf.pos_emb = p.pos_emb.cast<float>();
  pf.final_norm = p.final_norm.cast<float>();
  pf.head = p.head.cast<float>();
  for (const auto& L : p.layers) {
    LayerParams<float> F;
    F.attn_norm = L.attn_norm.cast<float>();
    F.wq = L.wq.cast<float>();
    F.wk = L.wk.cast<float>();
    F.wv = L.wv.cast<float>();
    F.wo = L.wo.cast<float>();
    F.ffn_norm = L.ffn_norm.cast<float>();
    F.w1 = L.w1.cast<float>();
    F.b1 = L.b1.cast<float>();
    F.w2 = L.w2.cast<float>();
    F.b2 = L.b2.cast<float>();
    for (const auto& [name, ad] : L.lora) F.lora[name] = {ad.a.cast<float>(), ad.b.cast<float>()};
    pf.layers.push_back(F);
  }
  Mat<double> x(7, 8);
  rng.fill_normal(x, 1.0);
  const Mat<float> lf = lm_forward<float>(pf, x.cast<float>());
  CHECK((lf.cast<double>() - lm_forward(p, x)).cwiseAbs().maxCoeff() < 1e-4);
}
