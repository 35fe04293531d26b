#include <doctest.h>

#include "stllm/microlm.hpp"
#include "stllm/prompt.hpp"
#include "test_util.hpp"

using namespace stllm;

namespace {

Vocabulary toy_vocab() { return Vocabulary::build({"hello", "hallo", "a", "b", "c", "x", "y", "z"}); }

std::vector<int> random_ids(Rng& rng, const Vocabulary& v, int n) {
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) ids.push_back(5 + static_cast<int>(rng.below(static_cast<std::uint64_t>(v.size() - 5))));
  return ids;
}

}  // namespace

TEST_CASE("vocabulary: reserved tokens first, sorted words, text round trip") {
  const Vocabulary v = toy_vocab();
  CHECK(v.size() == 13);
  CHECK(v.token(v.bos()) == "<bos>");
  CHECK(v.token(v.eos()) == "<eos>");
  CHECK(v.token(v.audio_sep()) == "<>audio<>");
  CHECK(v.token(v.transcript_sep()) == "<>transcript<>");
  CHECK(v.token(v.translation_sep()) == "<>translation<>");
  CHECK(v.token(5) == "a");
  CHECK(Vocabulary::build({"b", "a", "b"}).size() == 7);
  CHECK(Vocabulary::from_text(v.to_text()) == v);
  CHECK(v.decode(v.encode("hello  a\tb")) == "hello a b");
  CHECK_THROWS_AS(v.encode("unknown"), Error);
  CHECK_THROWS_AS(Vocabulary::from_tokens({"<bos>", "<eos>", "x"}), FormatError);
  CHECK_THROWS_AS(Vocabulary::from_tokens({"<bos>", "<eos>", "<>audio<>", "<>transcript<>", "<>translation<>", "a", "a"}),
                  FormatError);

  testutil::TempDir dir("vocab");
  v.save(dir / "vocab.txt");
  CHECK(Vocabulary::load(dir / "vocab.txt") == v);
  CHECK(testutil::read_text(dir / "vocab.txt").rfind("<bos>\n<eos>\n", 0) == 0);
}

TEST_CASE("training layout: 2 + 3 tokens with 4 audio frames") {
  const Vocabulary v = toy_vocab();
  const std::vector<int> tr = v.encode("a b"), tl = v.encode("x y z");
  const PromptLayout p = training_layout(4, tr, tl, v);
  CHECK(p.length() == 14);
  CHECK(p.mask_count() == 7);
  const std::vector<int> ids{v.bos(), v.audio_sep(), kAudioSlot, kAudioSlot, kAudioSlot, kAudioSlot,
                             v.transcript_sep(), tr[0], tr[1], v.translation_sep(), tl[0], tl[1], tl[2], v.eos()};
  CHECK(p.input_ids == ids);
  // Predictions of: a b <>translation<> x y z <eos>.
  const std::vector<std::uint8_t> mask{0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 0};
  CHECK(p.loss_mask == mask);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t)
    CHECK(p.target_ids[t] == (ids[t + 1] == kAudioSlot ? kNoTarget : ids[t + 1]));
  CHECK(p.target_ids.back() == kNoTarget);
}

TEST_CASE("training layout: preconditions") {
  const Vocabulary v = toy_vocab();
  const std::vector<int> tr = v.encode("a"), none;
  CHECK_THROWS_AS(training_layout(0, tr, tr, v), EmptyInputError);
  CHECK_THROWS_AS(training_layout(3, none, tr, v), EmptyInputError);
  CHECK_THROWS_AS(training_layout(3, tr, none, v), EmptyInputError);
  const std::vector<int> bad{99};
  CHECK_THROWS_AS(training_layout(3, bad, tr, v), ShapeError);
  CHECK_THROWS_AS(inference_layout(0, v), EmptyInputError);
  const Mat<double> table = Mat<double>::Zero(v.size(), 8);
  CHECK_THROWS_AS(assemble_training_sample<double>(Mat<double>::Zero(2, 7), tr, tr, v, table), ShapeError);
  CHECK_THROWS_AS(assemble_inference_prompt<double>(Mat<double>::Zero(2, 7), v, table), ShapeError);
}

TEST_CASE("layout properties on random samples") {
  const Vocabulary v = toy_vocab();
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = rng.range(1, 12), n = rng.range(1, 6), m = rng.range(1, 6);
    const auto tr = random_ids(rng, v, n), tl = random_ids(rng, v, m);
    Mat<double> table(v.size(), 6), audio(T, 6);
    rng.fill_normal(table, 1.0);
    rng.fill_normal(audio, 1.0);
    const auto s = assemble_training_sample<double>(audio, tr, tl, v, table);
    CHECK(s.layout.mask_count() == n + m + 2);
    CHECK(s.layout.length() == T + n + m + 5);
    // Spans read back the inputs.
    const auto& ids = s.layout.input_ids;
    CHECK(std::vector<int>(ids.begin() + s.layout.transcript_begin,
                           ids.begin() + s.layout.transcript_begin + s.layout.transcript_len) == tr);
    CHECK(std::vector<int>(ids.begin() + s.layout.translation_begin,
                           ids.begin() + s.layout.translation_begin + s.layout.translation_len) == tl);
    CHECK(s.embed_seq.middleRows(s.layout.audio_begin, T) == audio);
    // Inference prompt = training prefix through <>transcript<>.
    const Mat<double> prompt = assemble_inference_prompt<double>(audio, v, table);
    CHECK(prompt.rows() == T + 3);
    CHECK(prompt == s.embed_seq.topRows(T + 3));
    CHECK(prompt.row(T + 2) == table.row(v.transcript_sep()));
    const PromptLayout inf = inference_layout(T, v);
    CHECK(inf.input_ids == std::vector<int>(ids.begin(), ids.begin() + T + 3));
    CHECK(assemble_inference_prompt<double>(audio, v, table) == prompt);
  }
}

TEST_CASE("loss ignores every mask-false target (exhaustive corruption)") {
  const Vocabulary v = toy_vocab();
  Rng rng(22);
  LmConfig cfg;
  cfg.vocab_size = v.size();
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_positions = 32;
  for (int trial = 0; trial < 20; ++trial) {
    const LmParams<double> lm = init_lm<double>(cfg, rng);
    const int T = rng.range(1, 6);
    Mat<double> audio(T, cfg.d_model);
    rng.fill_normal(audio, 1.0);
    const auto s = assemble_training_sample<double>(audio, random_ids(rng, v, rng.range(1, 4)),
                                                    random_ids(rng, v, rng.range(1, 4)), v, lm.tok_emb);
    const Mat<double> logits = lm_forward(lm, s.embed_seq);
    const double base = masked_cross_entropy(logits, s.layout.target_ids, s.layout.loss_mask);
    for (std::size_t t = 0; t < s.layout.target_ids.size(); ++t) {
      if (s.layout.loss_mask[t]) continue;
      for (int id = -1; id < v.size(); ++id) {
        auto targets = s.layout.target_ids;
        targets[t] = id;
        CHECK(masked_cross_entropy(logits, targets, s.layout.loss_mask) == base);
      }
    }
    // A mask-true target does matter.
    auto targets = s.layout.target_ids;
    const auto first = static_cast<std::size_t>(std::find(s.layout.loss_mask.begin(), s.layout.loss_mask.end(), 1) -
                                                s.layout.loss_mask.begin());
    targets[first] = (targets[first] + 1) % v.size();
    CHECK(masked_cross_entropy(logits, targets, s.layout.loss_mask) != base);
  }
}

TEST_CASE("split_output") {
  const Vocabulary v = toy_vocab();
  const int sep = v.translation_sep(), eos = v.eos();
  const int hello = v.id("hello"), hallo = v.id("hallo");
  const SplitOutput s = split_output(std::vector<int>{hello, sep, hallo, eos}, v);
  CHECK(s.transcript == "hello");
  CHECK(s.translation == "hallo");

  const SplitOutput no_eos = split_output(std::vector<int>{hello, sep, hallo}, v);
  CHECK(no_eos.translation == "hallo");
  CHECK(split_output(std::vector<int>{sep, eos}, v).transcript.empty());

  try {
    split_output(std::vector<int>{hello, hallo}, v);
    FAIL("expected MalformedOutputError");
  } catch (const MalformedOutputError& e) {
    CHECK(e.transcript_so_far() == "hello hallo");
  }
  try {
    split_output(std::vector<int>{hello, eos, sep, hallo}, v);
    FAIL("expected MalformedOutputError");
  } catch (const MalformedOutputError& e) {
    CHECK(e.transcript_so_far() == "hello");
  }

  // Every placement of two separators in a 4-slot word sequence: the split is
  // at the first one and the second is translation content.
  const std::vector<int> words{v.id("a"), v.id("b"), v.id("c"), v.id("x")};
  for (std::size_t i = 0; i <= words.size(); ++i)
    for (std::size_t j = i; j <= words.size(); ++j) {
      std::vector<int> ids(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(i));
      ids.push_back(sep);
      ids.insert(ids.end(), words.begin() + static_cast<std::ptrdiff_t>(i), words.begin() + static_cast<std::ptrdiff_t>(j));
      ids.push_back(sep);
      ids.insert(ids.end(), words.begin() + static_cast<std::ptrdiff_t>(j), words.end());
      ids.push_back(eos);
      const SplitOutput o = split_output(ids, v);
      CHECK(o.transcript == v.decode(std::span<const int>(words.data(), i)));
      std::vector<int> rest(ids.begin() + static_cast<std::ptrdiff_t>(i) + 1, ids.end() - 1);
      CHECK(o.translation == v.decode(rest));
    }
}
