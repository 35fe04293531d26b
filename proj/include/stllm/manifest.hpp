#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stllm {

/// One sample. `features_path` is relative to the manifest's directory unless absolute.
struct ManifestRecord {
  std::string id;
  std::string features_path;
  std::string transcript;
  std::optional<std::string> translation;
  /// Per-frame labels for the CTC-collapse adapter, when known.
  std::optional<std::vector<int>> frame_labels;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  /// Directory relative feature paths resolve against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestRecord& r) const;
};

// One JSON object per line with keys in fixed order:
//   {"id":..,"features":..,"transcript":..,"translation":..,"frame_labels":[..]}
std::string serialize_record(const ManifestRecord& r);
ManifestRecord parse_record(const std::string& line);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace stllm
