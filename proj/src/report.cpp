#include "stllm/eval/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <unicode/uversion.h>

#include "stllm/errors.hpp"

namespace stllm::eval {

using ordered_json = nlohmann::ordered_json;

SetScores& EvalReport::set(const std::string& id) {
  for (auto& [k, v] : sets)
    if (k == id) return v;
  sets.emplace_back(id, SetScores{});
  return sets.back().second;
}

const SetScores* EvalReport::find(const std::string& id) const {
  for (const auto& [k, v] : sets)
    if (k == id) return &v;
  return nullptr;
}

void EvalReport::validate() const {
  for (const auto& [id, s] : sets) {
    if (s.wer && !(*s.wer >= 0.0)) throw FormatError(FormatError::Kind::Parse, "report: negative WER in " + id);
    for (const auto& b : {s.bleu_doc, s.bleu_reseg})
      if (b && !(*b >= 0.0 && *b <= 100.0))
        throw FormatError(FormatError::Kind::Parse, "report: BLEU outside [0, 100] in " + id);
  }
}

void EvalReport::merge(const EvalReport& other) {
  for (const auto& [id, s] : other.sets) {
    SetScores& mine = set(id);
    if (!mine.wer && s.wer) {
      mine.wer = s.wer;
      mine.substitutions = s.substitutions;
      mine.deletions = s.deletions;
      mine.insertions = s.insertions;
      mine.ref_words = s.ref_words;
    }
    if (!mine.bleu_doc) mine.bleu_doc = s.bleu_doc;
    if (!mine.bleu_reseg) mine.bleu_reseg = s.bleu_reseg;
    mine.hyp_segments = std::max(mine.hyp_segments, s.hyp_segments);
    mine.ref_segments = std::max(mine.ref_segments, s.ref_segments);
  }
  for (const auto& kv : other.tool_versions)
    if (std::find(tool_versions.begin(), tool_versions.end(), kv) == tool_versions.end()) tool_versions.push_back(kv);
}

std::vector<std::pair<std::string, std::string>> default_tool_versions() {
  return {{"stllm", STLLM_VERSION},
          {"bleu", "stllm-bleu/1 (n=4, tok=ws+punct, smooth=exp)"},
          {"wer", "stllm-wer/1 (lpw, mwer-reseg)"},
          {"icu", U_ICU_VERSION}};
}

namespace {

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> read_optional(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::string serialize_report(const EvalReport& report) {
  ordered_json j;
  j["system"] = report.system;
  ordered_json sets = ordered_json::array();
  for (const auto& [id, s] : report.sets) {
    ordered_json e;
    e["id"] = id;
    e["wer"] = optional_number(s.wer);
    e["substitutions"] = s.substitutions;
    e["deletions"] = s.deletions;
    e["insertions"] = s.insertions;
    e["ref_words"] = s.ref_words;
    e["bleu_doc"] = optional_number(s.bleu_doc);
    e["bleu_reseg"] = optional_number(s.bleu_reseg);
    e["hyp_segments"] = s.hyp_segments;
    e["ref_segments"] = s.ref_segments;
    sets.push_back(std::move(e));
  }
  j["sets"] = std::move(sets);
  ordered_json tools = ordered_json::object();
  for (const auto& [k, v] : report.tool_versions) tools[k] = v;
  j["tool_versions"] = std::move(tools);
  return j.dump(2) + "\n";
}

EvalReport parse_report(const std::string& text) {
  EvalReport r;
  try {
    const ordered_json j = ordered_json::parse(text);
    r.system = j.value("system", std::string());
    for (const auto& e : j.at("sets")) {
      SetScores s;
      s.wer = read_optional(e, "wer");
      s.bleu_doc = read_optional(e, "bleu_doc");
      s.bleu_reseg = read_optional(e, "bleu_reseg");
      s.substitutions = e.value("substitutions", 0L);
      s.deletions = e.value("deletions", 0L);
      s.insertions = e.value("insertions", 0L);
      s.ref_words = e.value("ref_words", 0L);
      s.hyp_segments = e.value("hyp_segments", 0L);
      s.ref_segments = e.value("ref_segments", 0L);
      r.sets.emplace_back(e.at("id").get<std::string>(), s);
    }
    if (j.contains("tool_versions"))
      for (const auto& [k, v] : j["tool_versions"].items()) r.tool_versions.emplace_back(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Parse, std::string("report: ") + e.what());
  }
  r.validate();
  return r;
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
  out << serialize_report(report);
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open report: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_report(buf.str());
}

std::string format_wer(std::optional<double> wer) {
  if (!wer) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", *wer * 100.0);
  return buf;
}

std::string format_bleu_pair(std::optional<double> doc, std::optional<double> reseg) {
  if (!doc && !reseg) return "-";
  auto cell = [](std::optional<double> v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  return cell(doc) + " / " + cell(reseg);
}

namespace {

std::string render_table(const std::string& title, const std::vector<std::string>& columns,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    width[c] = columns[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::string out = title + "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s = "|";
    for (std::size_t c = 0; c < cells.size(); ++c) s += " " + cells[c] + std::string(width[c] - cells[c].size(), ' ') + " |";
    return s + "\n";
  };
  out += line(columns);
  std::string sep = "|";
  for (std::size_t c = 0; c < columns.size(); ++c) sep += std::string(width[c] + 2, '-') + "|";
  out += sep + "\n";
  for (const auto& row : rows) out += line(row);
  return out;
}

}  // namespace

std::string render_report(const std::vector<EvalReport>& reports) {
  std::vector<std::string> ids;
  bool any_wer = false, any_bleu = false;
  for (const auto& r : reports)
    for (const auto& [id, s] : r.sets) {
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
      any_wer |= s.wer.has_value();
      any_bleu |= s.bleu_doc.has_value() || s.bleu_reseg.has_value();
    }

  std::vector<std::string> columns{"System"};
  columns.insert(columns.end(), ids.begin(), ids.end());
  std::string out;
  if (any_wer) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : reports) {
      std::vector<std::string> row{r.system};
      for (const auto& id : ids) {
        const SetScores* s = r.find(id);
        row.push_back(format_wer(s ? s->wer : std::nullopt));
      }
      rows.push_back(std::move(row));
    }
    out += render_table("WER", columns, rows);
  }
  if (any_bleu) {
    if (!out.empty()) out += "\n";
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : reports) {
      std::vector<std::string> row{r.system};
      for (const auto& id : ids) {
        const SetScores* s = r.find(id);
        row.push_back(s ? format_bleu_pair(s->bleu_doc, s->bleu_reseg) : "-");
      }
      rows.push_back(std::move(row));
    }
    out += render_table("BLEU (docAsWhole / mwerSegmenter)", columns, rows);
  }
  return out;
}

std::string render_report(const EvalReport& report) { return render_report(std::vector<EvalReport>{report}); }

}  // namespace stllm::eval
