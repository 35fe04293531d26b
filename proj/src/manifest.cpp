#include "stllm/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "stllm/errors.hpp"

namespace stllm {

using ordered_json = nlohmann::ordered_json;

std::filesystem::path Manifest::resolve(const ManifestRecord& r) const {
  std::filesystem::path p(r.features_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::string serialize_record(const ManifestRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["features"] = r.features_path;
  j["transcript"] = r.transcript;
  j["translation"] = r.translation ? ordered_json(*r.translation) : ordered_json(nullptr);
  if (r.frame_labels) j["frame_labels"] = *r.frame_labels;
  return j.dump();
}

ManifestRecord parse_record(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(FormatError::Kind::Parse, std::string("manifest: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("features") || !j["id"].is_string() ||
      !j["features"].is_string())
    throw FormatError(FormatError::Kind::Parse, "manifest: record needs string 'id' and 'features'");

  ManifestRecord r;
  try {
    r.id = j["id"].get<std::string>();
    r.features_path = j["features"].get<std::string>();
    r.transcript = j.value("transcript", std::string());
    if (j.contains("translation") && !j["translation"].is_null())
      r.translation = j["translation"].get<std::string>();
    if (j.contains("frame_labels") && !j["frame_labels"].is_null())
      r.frame_labels = j["frame_labels"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Parse, std::string("manifest: ") + e.what());
  }
  return r;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
  for (const auto& r : m.records) out << serialize_record(r) << '\n';
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open manifest: " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ManifestRecord r = parse_record(line);
    if (!seen.insert(r.id).second)
      throw FormatError(FormatError::Kind::Parse,
                        "manifest line " + std::to_string(lineno) + ": duplicate id '" + r.id + "'");
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace stllm
