#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stllm::eval {

struct SetScores {
  std::optional<double> wer;  // fraction
  std::optional<double> bleu_doc;
  std::optional<double> bleu_reseg;
  long substitutions = 0, deletions = 0, insertions = 0, ref_words = 0;
  long hyp_segments = 0;
  long ref_segments = 0;

  bool operator==(const SetScores&) const = default;
};

/// Scores of one system, keyed by test-set id in insertion order.
struct EvalReport {
  std::string system;
  std::vector<std::pair<std::string, SetScores>> sets;
  std::vector<std::pair<std::string, std::string>> tool_versions;

  SetScores& set(const std::string& id);
  const SetScores* find(const std::string& id) const;
  void validate() const;
  /// Fills in fields that are empty here from `other` (same system).
  void merge(const EvalReport& other);

  bool operator==(const EvalReport&) const = default;
};

std::vector<std::pair<std::string, std::string>> default_tool_versions();

/// JSON with a fixed key order; byte-stable for equal reports.
std::string serialize_report(const EvalReport& report);
EvalReport parse_report(const std::string& text);
void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

/// "4.1%" for 0.041; "-" when missing.
std::string format_wer(std::optional<double> wer);
/// "41.33 / 31.98"; a missing side renders as "-", both missing as "-".
std::string format_bleu_pair(std::optional<double> doc, std::optional<double> reseg);

/// WER table and BLEU (docAsWhole / mwerSegmenter) table, one row per system,
/// one column per test set in order of first appearance.
std::string render_report(const std::vector<EvalReport>& reports);
std::string render_report(const EvalReport& report);

}  // namespace stllm::eval
