#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trafficdiff/diffusion.hpp"
#include "trafficdiff/enhance.hpp"
#include "trafficdiff/harness.hpp"
#include "trafficdiff/trace_ingest.hpp"

namespace trafficdiff {

struct DatasetEntry {
  DatasetSpec spec;
  /// "toy" generates traces; "dir" loads <input_dir>/<label>/*.csv.
  std::string source = "toy";
  std::filesystem::path input_dir;
  std::string traffic_type;
  std::string platform;
  ToyFamily toy;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path artifact_root = "artifacts";
  std::vector<DatasetEntry> datasets;
  SplitSpec split;
  EnhanceConfig enhance;
  DiffusionConfig diffusion;
  /// 1D model over traces, used by the 1d2d protocol.
  std::optional<DiffusionConfig> diffusion_1d;
  int sample_count = 80;

  std::string embedder = "pixel";
  int fid_n = 80;
  int histogram_bins = 32;

  std::vector<std::string> protocols{"hierarchical"};
  HarnessConfig harness;
  int synth_count = 80;
  std::vector<int> limited_sizes{5, 10};
  /// Empty selects n/4, n/2 and n.
  std::vector<std::size_t> realtime_prefixes;
  std::vector<int> synth_counts{20, 40, 80};
  std::vector<int> anomaly_classes;
  std::vector<int> legitimate_classes;
  int anomaly_train_count = 5;
  std::size_t anomaly_prefix = 0;
  int ensemble = 5;

  /// Parses a JSON document; relative paths resolve against `base_dir`.
  static RunConfig parse(std::string_view json_text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  /// Canonical JSON of every field, with paths as given.
  std::string to_json() const;
  /// Canonical JSON of the fields a stage depends on.
  std::string stage_section(std::string_view stage) const;
};

inline constexpr std::array<std::string_view, 8> kStages{"ingest", "encode", "enhance", "train-dm",
                                                         "sample", "fid",    "eval",    "report"};

inline constexpr std::array<std::string_view, 6> kProtocols{"hierarchical", "limited", "anomaly",
                                                            "realtime",     "1d2d",    "synthsweep"};

/// Carries the process exit code: 2 for missing inputs, 3 for a missing
/// upstream stage, 1 otherwise.
struct StageError : std::runtime_error {
  StageError(const std::string& message, int code) : std::runtime_error(message), exit_code(code) {}
  int exit_code;
};

struct StageOptions {
  bool force = false;
  std::optional<int> sample_count;
  std::vector<std::string> protocols;
  std::function<void(const std::string&)> log;
};

struct StageOutcome {
  std::string stage;
  bool skipped = false;
  std::filesystem::path dir;
  std::string manifest_sha256;
};

/// Explicit flag, then $TRAFFICDIFF_ARTIFACT_ROOT, then the config value.
std::filesystem::path resolve_artifact_root(const RunConfig& cfg, const std::optional<std::filesystem::path>& flag);

/// Runs one stage. A stage whose manifest matches the current stage key and
/// whose files verify is skipped unless options.force is set.
StageOutcome run_stage(const RunConfig& cfg, std::string_view stage, const std::filesystem::path& root,
                       const StageOptions& options = {});

/// All stages in order.
std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, const std::filesystem::path& root,
                                       const StageOptions& options = {});

/// Table-2 layout: layer,data,original,synth,ori+synth.
std::string hierarchical_table(const EvalReport& report);
/// Table-3 layout: data,original,synth-1D,synth-2D,ori+synth-1D,ori+synth-2D.
std::string one_d_two_d_table(const EvalReport& report);
/// Table-4 layout: data,80%-1D,80%-2D,40%-1D,40%-2D,20%-1D,20%-2D.
std::string fraction_table(const EvalReport& report);
/// Limited-data gain: data,classifier,train_size,gain with gain = ori+synth
/// minus original accuracy per size, plus a `mean` row over sizes per group.
std::string limited_gain_table(const EvalReport& report);

}  // namespace trafficdiff
