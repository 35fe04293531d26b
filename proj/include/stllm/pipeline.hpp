#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stllm/adapters.hpp"
#include "stllm/checkpoint.hpp"
#include "stllm/config.hpp"
#include "stllm/decoding.hpp"
#include "stllm/features.hpp"
#include "stllm/manifest.hpp"
#include "stllm/microlm.hpp"
#include "stllm/optim.hpp"
#include "stllm/prompt.hpp"
#include "stllm/rng.hpp"
#include "stllm/vocab.hpp"

namespace stllm {

/// Frozen linear frame labeller: softmax regression from encoder frames to
/// CTC label ids, fitted once with framewise cross-entropy.
template <typename Scalar>
struct FrameClassifier {
  Mat<Scalar> weight;  // d x K
  Mat<Scalar> bias;    // 1 x K

  Mat<Scalar> logits(const Mat<Scalar>& frames) const {
    Mat<Scalar> out = frames * weight;
    out.rowwise() += bias.row(0);
    return out;
  }
};

/// Full-batch gradient descent from zero weights; deterministic.
template <typename Scalar>
FrameClassifier<Scalar> fit_frame_classifier(const std::vector<Mat<Scalar>>& frames,
                                             const std::vector<std::vector<int>>& labels, int num_labels, int steps,
                                             double lr) {
  if (frames.empty() || frames.size() != labels.size()) throw ShapeError("frame classifier: no training frames");
  const Index d = frames.front().cols();
  Index total = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (static_cast<std::size_t>(frames[i].rows()) != labels[i].size())
      throw ShapeError("frame classifier: label count mismatch");
    total += frames[i].rows();
  }
  Mat<Scalar> x(total, d);
  Mat<Scalar> onehot = Mat<Scalar>::Zero(total, num_labels);
  Index row = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    x.middleRows(row, frames[i].rows()) = frames[i];
    for (int y : labels[i]) {
      if (y < 0 || y >= num_labels) throw ShapeError("frame classifier: label out of range");
      onehot(row++, y) = Scalar(1);
    }
  }
  FrameClassifier<Scalar> c{Mat<Scalar>::Zero(d, num_labels), Mat<Scalar>::Zero(1, num_labels)};
  const Scalar step = static_cast<Scalar>(lr / static_cast<double>(total));
  for (int it = 0; it < steps; ++it) {
    const Mat<Scalar> err = softmax_rows<Scalar>(c.logits(x)) - onehot;
    c.weight -= step * (x.transpose() * err);
    c.bias -= step * err.colwise().sum();
  }
  return c;
}

/// Speech encoder features -> length adapter -> projection -> causal LM.
template <typename Scalar>
struct SpeechLm {
  PipelineConfig config;  // feature_dim resolved, lm.vocab_size set
  Vocabulary vocab;
  std::optional<ConvAdapterParams<Scalar>> conv;
  ProjectionParams<Scalar> projection;
  LmParams<Scalar> lm;
  std::optional<FrameClassifier<Scalar>> classifier;

  Index feature_dim() const { return config.feature_dim; }

  static SpeechLm initialize(PipelineConfig cfg, Vocabulary vocab, Index feature_dim) {
    if (feature_dim < 1) throw ConfigError("pipeline: feature dim must be >= 1");
    if (cfg.feature_dim != 0 && cfg.feature_dim != feature_dim)
      throw ConfigError("pipeline: config feature_dim " + std::to_string(cfg.feature_dim) + " but data has " +
                        std::to_string(feature_dim));
    cfg.feature_dim = static_cast<int>(feature_dim);
    cfg.lm.vocab_size = vocab.size();
    cfg.validate();
    SpeechLm m;
    m.config = cfg;
    m.vocab = std::move(vocab);
    Rng rng(cfg.init_seed);
    Index proj_in = feature_dim;
    if (cfg.adapter.kind == AdapterKind::Conv5x5) {
      const Index d_out = cfg.adapter.conv_d_out > 0 ? cfg.adapter.conv_d_out : feature_dim;
      m.conv = ConvAdapterParams<Scalar>::random(feature_dim, d_out, rng);
      proj_in = d_out;
    }
    m.projection = ProjectionParams<Scalar>::random(proj_in, cfg.lm.d_model, rng);
    m.projection.weight *= static_cast<Scalar>(cfg.init.embedding_std);
    m.lm = init_lm<Scalar>(cfg.lm, rng, cfg.init);
    attach_lora(m.lm, cfg.lora, rng);
    return m;
  }

  /// Frame labels for the CTC-collapse adapter.
  FrameLabels frame_labels(const Mat<Scalar>& features, const std::optional<std::vector<int>>& given) const {
    if (config.adapter.labels == LabelSource::Classifier) {
      if (!classifier) throw ConfigError("pipeline: classifier labels requested but no classifier fitted");
      return ctc_greedy_labels(classifier->logits(features), config.adapter.blank_id);
    }
    if (!given) throw FormatError(FormatError::Kind::Parse, "pipeline: record has no frame_labels");
    return FrameLabels{*given, config.adapter.blank_id};
  }

  /// Length adapter output (input to the projection).
  Mat<Scalar> adapt(const Mat<Scalar>& features, const std::optional<std::vector<int>>& labels) const {
    if (features.cols() != feature_dim())
      throw ShapeError("pipeline: feature dim " + std::to_string(features.cols()) + " vs model " +
                       std::to_string(feature_dim()));
    if (conv) return conv_forward(features, *conv);
    return ctc_collapse(features, frame_labels(features, labels), config.adapter.keep_blanks);
  }

  Mat<Scalar> audio_embeddings(const Mat<Scalar>& adapted) const { return projection_forward(adapted, projection); }
};

/// Visits every tensor of the model. Frozen classifier tensors are reported
/// with trainable = false, as are base weights frozen by low-rank mode.
template <typename M, typename F>
void for_each_model_tensor(M& m, F&& f) {
  if (m.conv) {
    f("conv.kernel", m.conv->kernel, TensorRole::Weight, true);
    f("conv.bias", m.conv->bias, TensorRole::Vector, true);
  }
  f("proj.weight", m.projection.weight, TensorRole::Weight, true);
  f("proj.bias", m.projection.bias, TensorRole::Vector, true);
  const LoraConfig lora = m.lm.lora;
  for_each_tensor(m.lm, [&](const std::string& name, auto& t, TensorRole role) {
    f("lm." + name, t, role, !frozen_by_lora(lora, name));
  });
  if (m.classifier) {
    f("labeler.weight", m.classifier->weight, TensorRole::Weight, false);
    f("labeler.bias", m.classifier->bias, TensorRole::Vector, false);
  }
}

template <typename M>
auto tensor_pointers(M& m) {
  using T = std::remove_reference_t<decltype(m.projection.weight)>;
  std::vector<T*> out;
  for_each_model_tensor(m, [&](const std::string&, T& t, TensorRole, bool) { out.push_back(&t); });
  return out;
}

template <typename Scalar>
SpeechLm<Scalar> zeros_like(const SpeechLm<Scalar>& m) {
  SpeechLm<Scalar> z = m;
  for (auto* t : tensor_pointers(z)) t->setZero();
  return z;
}

/// One training record after feature loading. For the CTC path the collapsed
/// sequence has no trainable inputs, so it is computed once.
template <typename Scalar>
struct TrainExample {
  std::string id;
  Mat<Scalar> features;
  Mat<Scalar> adapted;  // cached CTC-collapse output; empty for conv
  std::vector<int> transcript_ids;
  std::vector<int> translation_ids;
};

template <typename Scalar>
struct BatchGradient {
  Scalar loss = 0;  // mean NLL over all mask-true tokens in the batch
  Index mask_tokens = 0;
  SpeechLm<Scalar> grads;
};

/// Exact gradient of the batch loss w.r.t. the adapter, projection, and LM.
/// Encoder features receive none.
template <typename Scalar>
BatchGradient<Scalar> batch_loss_and_grad(const SpeechLm<Scalar>& model, const std::vector<const TrainExample<Scalar>*>& batch) {
  struct Prepared {
    Mat<Scalar> adapted;
    PromptSample<Scalar> sample;
  };
  std::vector<Prepared> prepared;
  Index total = 0;
  for (const auto* ex : batch) {
    Prepared p;
    p.adapted = model.conv ? conv_forward(ex->features, *model.conv) : ex->adapted;
    p.sample = assemble_training_sample(model.audio_embeddings(p.adapted), std::span<const int>(ex->transcript_ids),
                                        std::span<const int>(ex->translation_ids), model.vocab, model.lm.tok_emb);
    total += p.sample.layout.mask_count();
    prepared.push_back(std::move(p));
  }
  if (total == 0) throw EmptyMaskError("batch has no mask-true positions");

  BatchGradient<Scalar> out;
  out.mask_tokens = total;
  out.grads = zeros_like(model);
  const auto dst = tensor_pointers(out.grads);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = prepared[i];
    const Scalar share = static_cast<Scalar>(p.sample.layout.mask_count()) / static_cast<Scalar>(total);
    LmGradient<Scalar> g = lm_backward(model.lm, p.sample, share);
    out.loss += g.loss;

    SpeechLm<Scalar> local = zeros_like(model);
    local.lm = std::move(g.params);
    const Mat<Scalar> d_audio = g.embed_seq.middleRows(p.sample.layout.audio_begin, p.sample.layout.audio_len);
    const ProjectionGrads<Scalar> pg = projection_backward(p.adapted, model.projection, d_audio);
    local.projection = pg.params;
    if (model.conv) local.conv = conv_backward(batch[i]->features, *model.conv, pg.input).params;
    const auto src = tensor_pointers(local);
    for (std::size_t k = 0; k < dst.size(); ++k) *dst[k] += *src[k];
  }
  return out;
}

struct TrainResult {
  std::vector<double> losses;  // per optimizer step
};

using StepCallback = std::function<void(int step, double lr, double loss)>;

/// AdamW with the warmup + cosine schedule. Batches are consecutive slices of
/// a per-epoch shuffle seeded by `train.seed`.
template <typename Scalar>
TrainResult train(SpeechLm<Scalar>& model, AdamState<Scalar>& state, const std::vector<TrainExample<Scalar>>& data,
                  const StepCallback& on_step = {}) {
  const TrainConfig& cfg = model.config.train;
  cfg.validate();
  if (data.empty()) throw EmptyInputError("train: empty training set");

  struct Slot {
    std::string name;
    Mat<Scalar>* param;
    bool decay;
  };
  std::vector<Slot> slots;
  for_each_model_tensor(model, [&](const std::string& name, Mat<Scalar>& t, TensorRole role, bool trainable) {
    slots.push_back({name, trainable ? &t : nullptr, role != TensorRole::Vector});
  });

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  TrainResult result;
  for (int step = 1; step <= cfg.total_steps; ++step) {
    std::vector<const TrainExample<Scalar>*> batch;
    while (static_cast<int>(batch.size()) < std::min<int>(cfg.batch_size, static_cast<int>(data.size()))) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    BatchGradient<Scalar> g;
    try {
      g = batch_loss_and_grad(model, batch);
    } catch (const NonFiniteError& e) {
      throw DivergenceError("train: " + std::string(e.what()) + " at step " + std::to_string(step),
                            static_cast<std::size_t>(step));
    }
    const double loss = static_cast<double>(g.loss);
    if (!std::isfinite(loss))
      throw DivergenceError("train: non-finite loss at step " + std::to_string(step), static_cast<std::size_t>(step));

    const double lr = lr_at_step(cfg, step);
    ++state.step;
    const auto grads = tensor_pointers(g.grads);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (!slots[k].param) continue;
      try {
        adamw_update(*slots[k].param, *grads[k], state.m[slots[k].name], state.v[slots[k].name], state.step, lr, cfg,
                     slots[k].decay);
      } catch (const NonFiniteError&) {
        throw DivergenceError("train: non-finite gradient at step " + std::to_string(step), static_cast<std::size_t>(step));
      }
    }
    result.losses.push_back(loss);
    if (on_step) on_step(step, lr, loss);
  }
  return result;
}

/// Loads features and token ids for every record; fits the frame classifier
/// when the config asks for one. Records must carry translations.
template <typename Scalar>
std::vector<TrainExample<Scalar>> prepare_training_data(SpeechLm<Scalar>& model, const Manifest& manifest) {
  std::vector<TrainExample<Scalar>> out;
  std::vector<std::optional<std::vector<int>>> labels;
  for (const auto& r : manifest.records) {
    if (!r.translation) throw FormatError(FormatError::Kind::Parse, "train: record '" + r.id + "' has no translation");
    TrainExample<Scalar> ex;
    ex.id = r.id;
    ex.features = read_features(manifest.resolve(r)).template cast<Scalar>();
    ex.transcript_ids = model.vocab.encode(r.transcript);
    ex.translation_ids = model.vocab.encode(*r.translation);
    labels.push_back(r.frame_labels);
    out.push_back(std::move(ex));
  }
  if (model.config.adapter.kind == AdapterKind::CtcCollapse) {
    if (model.config.adapter.labels == LabelSource::Classifier && !model.classifier) {
      std::vector<Mat<Scalar>> frames;
      std::vector<std::vector<int>> ys;
      int num_labels = model.config.adapter.blank_id + 1;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!labels[i]) throw FormatError(FormatError::Kind::Parse, "train: classifier needs frame_labels on " + out[i].id);
        frames.push_back(out[i].features);
        ys.push_back(*labels[i]);
        for (int y : *labels[i]) num_labels = std::max(num_labels, y + 1);
      }
      model.classifier = fit_frame_classifier(frames, ys, num_labels, model.config.adapter.classifier_steps,
                                              model.config.adapter.classifier_lr);
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].adapted = model.adapt(out[i].features, labels[i]);
  }
  return out;
}

/// Every word of every transcript and translation.
Vocabulary build_vocabulary(const Manifest& manifest);

/// Feature dim of the first record.
Index probe_feature_dim(const Manifest& manifest);

template <typename Scalar>
struct TrainedModel {
  SpeechLm<Scalar> model;
  AdamState<Scalar> optimizer;
  TrainResult result;
};

template <typename Scalar>
TrainedModel<Scalar> run_training(const PipelineConfig& config, const Manifest& manifest,
                                  const StepCallback& on_step = {}) {
  if (manifest.records.empty()) throw EmptyInputError("train: empty manifest");
  TrainedModel<Scalar> t;
  t.model = SpeechLm<Scalar>::initialize(config, build_vocabulary(manifest), probe_feature_dim(manifest));
  const auto data = prepare_training_data(t.model, manifest);
  t.result = train(t.model, t.optimizer, data, on_step);
  return t;
}

/// Next-token log-probabilities for the LM continuing `prompt` with `generated`.
template <typename Scalar>
RowVec<double> next_token_logprobs(const LmParams<Scalar>& lm, const Mat<Scalar>& prompt, std::span<const int> generated) {
  Mat<Scalar> seq(prompt.rows() + static_cast<Index>(generated.size()), prompt.cols());
  seq.topRows(prompt.rows()) = prompt;
  for (std::size_t i = 0; i < generated.size(); ++i)
    seq.row(prompt.rows() + static_cast<Index>(i)) = lm.tok_emb.row(generated[i]);
  const Mat<Scalar> logits = lm_forward(lm, seq);
  return log_softmax_row<Scalar>(logits.row(logits.rows() - 1)).template cast<double>();
}

struct RecordOutput {
  std::string id;
  std::optional<std::string> transcript;
  std::optional<std::string> translation;
  std::vector<int> generated;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

/// adapter -> projection -> inference prompt -> beam search -> split.
template <typename Scalar>
RecordOutput infer_features(const SpeechLm<Scalar>& model, const Mat<Scalar>& features,
                            const std::optional<std::vector<int>>& labels, const DecodeConfig& decode) {
  RecordOutput out;
  const Mat<Scalar> audio = model.audio_embeddings(model.adapt(features, labels));
  const Mat<Scalar> prompt = assemble_inference_prompt(audio, model.vocab, model.lm.tok_emb);
  const int room = model.lm.config.max_positions - static_cast<int>(prompt.rows());
  if (room < 1) throw ShapeError("infer: prompt of length " + std::to_string(prompt.rows()) + " fills the context");
  auto scorer = [&](std::span<const int> generated) { return next_token_logprobs(model.lm, prompt, generated); };
  const DecodeResult r = beam_search(scorer, model.vocab.eos(), decode.beam, std::min(decode.max_len, room),
                                     decode.length_penalty);
  out.generated = r.ids;
  try {
    const SplitOutput s = split_output(r.ids, model.vocab);
    out.transcript = s.transcript;
    out.translation = s.translation;
  } catch (const MalformedOutputError& e) {
    out.transcript = e.transcript_so_far();
    out.error = e.what();
  }
  return out;
}

/// Per-record failures are reported in the output and do not stop the run.
template <typename Scalar>
std::vector<RecordOutput> run_inference(const SpeechLm<Scalar>& model, const Manifest& manifest,
                                        const DecodeConfig& decode) {
  std::vector<RecordOutput> outputs;
  for (const auto& r : manifest.records) {
    RecordOutput out;
    try {
      const Mat<Scalar> features = read_features(manifest.resolve(r)).template cast<Scalar>();
      out = infer_features(model, features, r.frame_labels, decode);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      out.error = e.what();
    }
    out.id = r.id;
    outputs.push_back(std::move(out));
  }
  return outputs;
}

template <typename Scalar>
Checkpoint to_checkpoint(const SpeechLm<Scalar>& model, const AdamState<Scalar>& state) {
  Checkpoint c;
  c.arch_hash = architecture_hash(model.config);
  c.config_ini = to_ini(model.config);
  c.vocab_text = model.vocab.to_text();
  c.optimizer_step = state.step;
  for_each_model_tensor(const_cast<SpeechLm<Scalar>&>(model),
                        [&](const std::string& name, Mat<Scalar>& t, TensorRole, bool) {
                          c.tensors.emplace_back(name, t.template cast<double>());
                        });
  for (const auto& [name, m] : state.m) c.tensors.emplace_back("adam.m/" + name, m.template cast<double>());
  for (const auto& [name, v] : state.v) c.tensors.emplace_back("adam.v/" + name, v.template cast<double>());
  return c;
}

template <typename Scalar>
struct LoadedModel {
  SpeechLm<Scalar> model;
  AdamState<Scalar> optimizer;
};

/// Rebuilds the model from its embedded config and vocabulary. A checkpoint
/// whose tensors disagree with that config is rejected.
template <typename Scalar>
LoadedModel<Scalar> from_checkpoint(const Checkpoint& c) {
  const PipelineConfig cfg = parse_config(c.config_ini);
  if (architecture_hash(cfg) != c.arch_hash) throw ConfigError("checkpoint: config hash mismatch");
  LoadedModel<Scalar> out;
  out.model = SpeechLm<Scalar>::initialize(cfg, Vocabulary::from_text(c.vocab_text), cfg.feature_dim);
  if (const Mat<double>* w = c.find("labeler.weight")) {
    const Mat<double>* b = c.find("labeler.bias");
    if (!b) throw FormatError(FormatError::Kind::Parse, "checkpoint: labeler.bias missing");
    out.model.classifier = FrameClassifier<Scalar>{w->cast<Scalar>(), b->cast<Scalar>()};
  }
  for_each_model_tensor(out.model, [&](const std::string& name, Mat<Scalar>& t, TensorRole, bool) {
    const Mat<double>* src = c.find(name);
    if (!src) throw FormatError(FormatError::Kind::Parse, "checkpoint: missing tensor " + name);
    if (src->rows() != t.rows() || src->cols() != t.cols())
      throw ConfigError("checkpoint: tensor " + name + " has shape " + std::to_string(src->rows()) + "x" +
                        std::to_string(src->cols()) + ", config expects " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
    t = src->cast<Scalar>();
  });
  out.optimizer.step = c.optimizer_step;
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind("adam.m/", 0) == 0) out.optimizer.m[name.substr(7)] = t.template cast<Scalar>();
    if (name.rfind("adam.v/", 0) == 0) out.optimizer.v[name.substr(7)] = t.template cast<Scalar>();
  }
  return out;
}

}  // namespace stllm
