// stllm: synth / train / infer / eval / report.
//
// Exit status: 0 ok, 1 usage, 2 data or format error, 3 training divergence,
// 4 evaluation mismatch.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stllm/eval/report.hpp"
#include "stllm/eval/scoring.hpp"
#include "stllm/pipeline.hpp"
#include "stllm/synth.hpp"

namespace fs = std::filesystem;
using namespace stllm;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3, kMismatch = 4 };

fs::path default_data_dir() {
  const char* env = std::getenv("STLLM_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("data");
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

struct TrainArgs {
  std::string config, manifest, checkpoint, loss_log;
  std::vector<std::string> overrides;
  bool keep_blanks = false;
};

template <typename S>
void do_train(const PipelineConfig& cfg, const TrainArgs& a) {
  const Manifest manifest = read_manifest(a.manifest);
  std::ofstream log;
  if (!a.loss_log.empty()) {
    log.open(a.loss_log);
    if (!log) throw FormatError(FormatError::Kind::Io, "cannot write " + a.loss_log);
    log << "step,lr,loss\n";
  }
  const int every = std::max(1, cfg.train.total_steps / 20);
  auto t = run_training<S>(cfg, manifest, [&](int step, double lr, double loss) {
    if (log) log << step << ',' << lr << ',' << loss << '\n';
    if (step % every == 0 || step == cfg.train.total_steps)
      std::fprintf(stderr, "step %d lr %.3g loss %.6f\n", step, lr, loss);
  });
  write_checkpoint(to_checkpoint(t.model, t.optimizer), a.checkpoint);
}

struct InferArgs {
  std::string checkpoint, manifest, out_dir;
  std::optional<int> beam, max_len;
  bool keep_blanks = false;
};

template <typename S>
int do_infer(const Checkpoint& ckpt, const InferArgs& a) {
  LoadedModel<S> loaded = from_checkpoint<S>(ckpt);
  DecodeConfig decode = loaded.model.config.decode;
  if (a.beam) decode.beam = *a.beam;
  if (a.max_len) decode.max_len = *a.max_len;
  if (decode.beam < 1 || decode.max_len < 1) throw ConfigError("--beam and --max-len must be >= 1");
  if (a.keep_blanks) loaded.model.config.adapter.keep_blanks = true;

  const Manifest manifest = read_manifest(a.manifest);
  const auto outputs = run_inference(loaded.model, manifest, decode);
  std::vector<std::string> transcripts, translations;
  int failed = 0;
  for (const auto& o : outputs) {
    transcripts.push_back(o.transcript.value_or(""));
    translations.push_back(o.translation.value_or(""));
    if (!o.ok()) {
      ++failed;
      std::fprintf(stderr, "%s: %s\n", o.id.c_str(), o.error.c_str());
    }
  }
  fs::create_directories(a.out_dir);
  write_lines(fs::path(a.out_dir) / "transcripts.txt", transcripts);
  write_lines(fs::path(a.out_dir) / "translations.txt", translations);
  std::fprintf(stderr, "%zu records, %d with errors\n", outputs.size(), failed);
  return kOk;
}

struct EvalArgs {
  std::string hyp, manifest, task = "asr", mode = "reseg", out, set_id, system = "system";
  bool append = false;
};

int do_eval(const EvalArgs& a) {
  const auto hyp = read_lines(a.hyp);
  const Manifest manifest = read_manifest(a.manifest);
  std::vector<std::string> ref;
  for (const auto& r : manifest.records) {
    if (a.task == "st") {
      if (!r.translation) throw EmptyInputError("record '" + r.id + "' has no reference translation");
      ref.push_back(*r.translation);
    } else {
      ref.push_back(r.transcript);
    }
  }
  if (ref.empty()) throw EmptyInputError("reference manifest is empty");
  if (a.mode == "doc" && hyp.size() != ref.size())
    throw EvalMismatchError("hypothesis has " + std::to_string(hyp.size()) + " segments, reference has " +
                            std::to_string(ref.size()));

  eval::EvalReport report;
  if (a.append && fs::exists(a.out)) report = eval::read_report(a.out);
  if (report.system.empty()) report.system = a.system;
  if (report.tool_versions.empty()) report.tool_versions = eval::default_tool_versions();
  const std::string id = a.set_id.empty() ? fs::path(a.manifest).stem().string() : a.set_id;
  eval::SetScores& s = report.set(id);
  s.hyp_segments = static_cast<long>(hyp.size());
  s.ref_segments = static_cast<long>(ref.size());
  if (a.task == "asr") {
    const eval::AsrScore score = eval::score_asr(hyp, ref);
    s.wer = score.wer.wer();
    s.substitutions = score.wer.substitutions;
    s.deletions = score.wer.deletions;
    s.insertions = score.wer.insertions;
    s.ref_words = score.wer.ref_words;
  } else {
    const auto mode = a.mode == "doc" ? eval::BleuMode::DocAsWhole : eval::BleuMode::Resegmented;
    const double bleu = eval::score_st(hyp, ref, mode).score;
    (mode == eval::BleuMode::DocAsWhole ? s.bleu_doc : s.bleu_reseg) = bleu;
  }
  report.validate();
  eval::write_report(report, a.out);
  std::cout << eval::render_report(report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech encoder + LLM fusion toolkit"};
  app.set_version_flag("--version", STLLM_VERSION);
  app.require_subcommand(1);

  SyntheticSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (manifest + feature files)");
  synth->add_option("--seed", spec.seed);
  synth->add_option("--n", spec.n_samples);
  synth->add_option("--vocab", spec.vocab_size);
  synth->add_option("--dim", spec.dim);
  synth->add_option("--noise", spec.noise_sigma);
  synth->add_option("--out", synth_out, "output directory (default $STLLM_DATA_DIR or ./data)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train the adapter, projection and LM");
  train_cmd->add_option("--config", ta.config, "INI config (defaults when omitted)");
  train_cmd->add_option("--manifest", ta.manifest)->required();
  train_cmd->add_option("--checkpoint", ta.checkpoint, "output checkpoint")->required();
  train_cmd->add_option("--loss-log", ta.loss_log, "CSV of step,lr,loss");
  train_cmd->add_option("--set", ta.overrides, "section.key=value override");
  train_cmd->add_flag("--keep-blanks", ta.keep_blanks);

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "decode a manifest into hypothesis files");
  infer->add_option("--checkpoint", ia.checkpoint)->required();
  infer->add_option("--manifest", ia.manifest)->required();
  infer->add_option("--out-dir", ia.out_dir, "writes transcripts.txt and translations.txt")->required();
  infer->add_option("--beam", ia.beam);
  infer->add_option("--max-len", ia.max_len);
  infer->add_flag("--keep-blanks", ia.keep_blanks);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score a hypothesis file against manifest references");
  eval_cmd->add_option("--hyp", ea.hyp)->required();
  eval_cmd->add_option("--manifest", ea.manifest)->required();
  eval_cmd->add_option("--task", ea.task)->check(CLI::IsMember({"asr", "st"}));
  eval_cmd->add_option("--mode", ea.mode)->check(CLI::IsMember({"doc", "reseg"}));
  eval_cmd->add_option("--out", ea.out, "report JSON")->required();
  eval_cmd->add_option("--set-id", ea.set_id, "test-set column (default: manifest stem)");
  eval_cmd->add_option("--system", ea.system);
  eval_cmd->add_flag("--append", ea.append, "merge into an existing report");

  std::vector<std::string> report_inputs;
  auto* report_cmd = app.add_subcommand("report", "render report JSON files as tables");
  report_cmd->add_option("reports", report_inputs)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) {
      const fs::path out = synth_out.empty() ? default_data_dir() : fs::path(synth_out);
      const Manifest m = synth_dataset(spec, out);
      std::fprintf(stderr, "wrote %zu records to %s\n", m.records.size(), out.string().c_str());
      return kOk;
    }
    if (*train_cmd) {
      PipelineConfig cfg = ta.config.empty() ? PipelineConfig{} : load_config(ta.config);
      for (const auto& o : ta.overrides) apply_override(cfg, o);
      if (ta.keep_blanks) cfg.adapter.keep_blanks = true;
      cfg.validate();
      if (cfg.precision == 32)
        do_train<float>(cfg, ta);
      else
        do_train<double>(cfg, ta);
      return kOk;
    }
    if (*infer) {
      const Checkpoint ckpt = read_checkpoint(ia.checkpoint);
      return parse_config(ckpt.config_ini).precision == 32 ? do_infer<float>(ckpt, ia) : do_infer<double>(ckpt, ia);
    }
    if (*eval_cmd) return do_eval(ea);
    if (*report_cmd) {
      std::vector<eval::EvalReport> reports;
      for (const auto& p : report_inputs) reports.push_back(eval::read_report(p));
      std::cout << eval::render_report(reports);
      return kOk;
    }
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDiverged;
  } catch (const EvalMismatchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMismatch;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
