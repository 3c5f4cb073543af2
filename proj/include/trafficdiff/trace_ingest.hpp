#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

namespace trafficdiff {

/// A labeled 1D traffic feature series as captured (bytes downloaded per
/// packet, packet size, or direction in {-1,+1}). Timestamps are optional for
/// data that is already binned.
struct RawTrace {
  std::vector<double> timestamps;
  std::vector<double> values;
  int class_label = 0;
  std::string dataset_id;
  std::string trace_id;

  bool has_timestamps() const { return !timestamps.empty(); }
  /// Throws std::invalid_argument when values are empty, timestamps are
  /// negative or decreasing, or timestamps and values disagree in length.
  void validate() const;
};

/// Fixed-length series with every sample in [0,1].
struct NormalizedTrace {
  std::vector<double> samples;
  int class_label = 0;
  std::string dataset_id;
  std::string trace_id;
};

struct DatasetSpec {
  std::string dataset_id = "toy";
  std::size_t target_length = 128;
  std::optional<double> bin_width;
  int num_classes = 2;
  int traces_per_class = 100;

  void validate() const;
};

struct SplitSpec {
  double train_fraction = 0.8;
};

struct DatasetSplit {
  std::vector<NormalizedTrace> train;
  std::vector<NormalizedTrace> test;
};

/// Sums values into non-overlapping [k*w, (k+1)*w) bins. The output covers
/// bins 0..last occupied bin, empty bins are zero, and timestamps hold bin
/// start times.
RawTrace bin_trace(const RawTrace& raw, double bin_width);

/// Keeps the first `target` samples or zero-pads up to `target`.
std::vector<double> fix_length(std::span<const double> values, std::size_t target);

/// Per-sequence min-max scaling to [0,1]. Constant sequences map to zeros.
std::vector<double> minmax_normalize(std::span<const double> values);

/// bin (when the dataset has a bin width) -> fix_length -> minmax_normalize.
NormalizedTrace prepare_trace(const RawTrace& raw, const DatasetSpec& spec);

/// Per class, the first floor(f*m) traces in input order train, the rest test.
DatasetSplit split_dataset(std::span<const NormalizedTrace> traces, const SplitSpec& spec);

/// Shape of the synthetic stand-in traffic. Class c oscillates with
/// `base_cycles + c * cycle_step` cycles per trace on top of a positive byte
/// level, with per-trace jitter, Gaussian noise and sparse bursts.
struct ToyFamily {
  double base_cycles = 1.0;
  double cycle_step = 1.0;
  double cycle_jitter = 0.15;
  double phase_jitter = 0.3;
  double noise = 0.15;
  double burst_rate = 2.0;
  double burst_scale = 1.0;
  /// Classes listed here follow a bursty random walk instead of a sinusoid.
  std::vector<int> random_walk_classes;
};

/// Deterministic for a fixed seed. Emits traces_per_class traces per class,
/// class-major, with raw (unnormalized, non-negative) values of length
/// spec.target_length. When spec.bin_width is set, timestamps are emitted at
/// a rate of four samples per bin so the trace exercises binning.
std::vector<RawTrace> gen_toy_dataset(const DatasetSpec& spec, std::uint64_t seed,
                                      const ToyFamily& family = {});

/// Reads `timestamp,value` or `value` CSV (optional header line). Packet
/// captures in `timestamp,size,direction` form yield size * direction.
RawTrace read_trace_csv(const std::filesystem::path& path, const std::string& dataset_id,
                        int class_label);

/// Writes the `timestamp,value` (or `value`) form read by read_trace_csv.
void write_trace_csv(const std::filesystem::path& path, const RawTrace& trace);

/// Loads `<root>/<class_label>/<trace_id>.csv`, classes and files in sorted
/// order. Collects every malformed file and throws one CsvError listing them.
std::vector<RawTrace> load_dataset_dir(const std::filesystem::path& root,
                                       const std::string& dataset_id);

struct CsvError : std::runtime_error {
  CsvError(std::string message, std::vector<std::string> files);
  std::vector<std::string> files;
};

/// `key = value` manifest with dataset_id, bin_width (number or "none"),
/// target_length, num_classes and optionally traces_per_class.
DatasetSpec read_dataset_manifest(const std::filesystem::path& path);
void write_dataset_manifest(const std::filesystem::path& path, const DatasetSpec& spec);

}  // namespace trafficdiff
