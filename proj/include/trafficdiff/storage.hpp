#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trafficdiff/enhance.hpp"
#include "trafficdiff/harness.hpp"
#include "trafficdiff/trace_ingest.hpp"

namespace trafficdiff {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

struct FileEntry {
  std::string path;  // relative to the stage directory
  std::string sha256;
  std::uint64_t bytes = 0;

  bool operator==(const FileEntry&) const = default;
};

/// Per-stage record: the key that determines the stage's outputs and every
/// file it wrote.
struct StageManifest {
  std::string stage;
  std::string stage_key;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // upstream stage -> manifest checksum
  std::vector<FileEntry> files;

  std::string to_json() const;
  static StageManifest from_json(std::string_view text);

  /// Inventory of every regular file under `dir` except manifest.json,
  /// sorted by relative path.
  static std::vector<FileEntry> scan(const std::filesystem::path& dir);
  /// True when every listed file exists with a matching checksum.
  bool verify(const std::filesystem::path& dir) const;
};

/// Normalized traces as CSV: trace_id,class_label,v0,...,v{n-1}.
void write_normalized_traces(const std::filesystem::path& path, std::span<const NormalizedTrace> traces);
std::vector<NormalizedTrace> read_normalized_traces(const std::filesystem::path& path, const std::string& dataset_id);

/// Binary item store: "TDITEMS1", u64 count, then per item id, label,
/// synthetic flag, trace (f64) and image (u32 h, u32 w, f32 pixels) with
/// provenance.
void write_items(const std::filesystem::path& path, const ItemSet& items);
ItemSet read_items(const std::filesystem::path& path);

}  // namespace trafficdiff
