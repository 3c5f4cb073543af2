#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trafficdiff/classifiers.hpp"
#include "trafficdiff/diffusion.hpp"
#include "trafficdiff/enhance.hpp"
#include "trafficdiff/trace_ingest.hpp"

namespace trafficdiff {

enum class Scenario { kOriginal, kSynth, kOriSynth };

inline constexpr std::array<Scenario, 3> kAllScenarios{Scenario::kOriginal, Scenario::kSynth, Scenario::kOriSynth};

/// "original", "synth", "ori+synth".
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

enum class HierarchyLevel { kL1, kL2, kL3 };
std::string to_string(HierarchyLevel level);

/// One labeled sample. Originals carry both their normalized trace and the
/// enhanced GASF image; synthetic items from a 2D model carry only the image.
struct Item {
  std::string id;
  int label = 0;
  bool synthetic = false;
  std::vector<double> trace;
  PixelImage image;
};

using ItemSet = std::vector<Item>;

struct PreparedDataset {
  std::string dataset_id;
  /// L1 group (e.g. video, website, iot).
  std::string traffic_type;
  /// L2 group; empty when the dataset has no platform grouping.
  std::string platform;
  EnhanceConfig enhance;
  ItemSet train;
  ItemSet test;

  std::size_t trace_length() const;
  std::vector<int> classes() const;
};

/// enhance_pipeline(gasf_encode(trace)) with the trace kept alongside.
Item make_item(const NormalizedTrace& trace, const EnhanceConfig& enhance);

PreparedDataset prepare_dataset(std::span<const NormalizedTrace> traces, const SplitSpec& split,
                                const EnhanceConfig& enhance, std::string traffic_type = {},
                                std::string platform = {});

/// One class-conditional model, or one unconditional model per class when
/// cfg.denoiser.num_classes == 0.
struct GeneratorSet {
  std::vector<DiffusionModel> models;

  std::vector<int> classes() const;
  /// `count` samples of `label`; the rng is seeded from (seed, label).
  std::vector<PixelImage> sample(int label, int count, std::uint64_t seed);
  /// Samples for every class, class-major.
  std::vector<PixelImage> sample_all(int per_class, std::uint64_t seed);
};

GeneratorSet fit_generators(std::span<const PixelImage> images, const DiffusionConfig& cfg,
                            const std::string& trained_on, std::uint64_t seed,
                            const std::function<void(int, double)>& progress = {});

/// Returns `per_class` synthetic items for every class of `train`, produced
/// by a generator fitted on `train` alone.
using SyntheticSource = std::function<ItemSet(const ItemSet& train, int per_class, std::uint64_t seed)>;

/// Class-conditional 2D diffusion model over the enhanced images.
SyntheticSource diffusion_source_2d(DiffusionConfig cfg);

/// 1D diffusion model over normalized traces (cfg.denoiser.one_d must be
/// set); samples are clamped to [0,1], GASF-encoded and enhanced.
SyntheticSource diffusion_source_1d(DiffusionConfig cfg, EnhanceConfig enhance);

/// Samples generated from one trained model, in the order sample() emits
/// them, as harness items.
ItemSet synthetic_items(std::span<const PixelImage> images, const std::string& tag);

/// Traces as 1 x n unit-range images for a 1D generator.
std::vector<PixelImage> trace_images(const ItemSet& items);

/// 1D generator samples, clamped to [0,1], GASF-encoded and enhanced.
ItemSet items_from_series(std::span<const PixelImage> series, const EnhanceConfig& enhance);

struct HarnessConfig {
  ClassifierKind classifier = ClassifierKind::kConv2d;
  ClassifierConfig classifier_cfg;
};

/// original -> original_train; synth -> the first synth_count pool items of
/// each class of original_train; ori+synth -> their union.
ItemSet build_training_set(Scenario scenario, const ItemSet& original_train, const ItemSet& synthetic_pool,
                           int synth_count);

/// Images for 2D classifiers, traces (height 1) for conv1d.
FeatureSet to_features(const ItemSet& items, bool one_d);

/// Percent accuracy on `test`. Rejects synthetic or training items in the
/// test set and test classes absent from training.
double train_and_eval(ClassifierKind kind, const ItemSet& train, const ItemSet& test, std::uint64_t seed,
                      const HarnessConfig& cfg);

struct EvalRow {
  std::string protocol;
  std::string dataset;
  std::string level = "L3";
  std::string scenario;
  std::string classifier;
  int train_size = 0;
  int synth_count = 0;
  int crop_length = 0;
  /// Protocol-specific qualifier: "1D"/"2D", a training fraction, a case id.
  std::string variant;
  double accuracy = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  void append(const EvalReport& other);
  void write_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
  static EvalReport read_csv(const std::filesystem::path& path);
};

/// L3 rows per dataset; L1 rows when at least two traffic types are present;
/// L2 rows for every traffic type whose datasets span at least two platforms.
/// `synthetic_pools` is keyed by dataset_id.
EvalReport hierarchical_eval(std::span<const PreparedDataset> datasets,
                             const std::map<std::string, ItemSet>& synthetic_pools, int synth_count,
                             std::span<const Scenario> scenarios, std::uint64_t seed, const HarnessConfig& cfg);

/// For each size s the generator is refitted on the first s originals per
/// class; rows for all three scenarios are keyed by s.
EvalReport limited_data_sweep(const PreparedDataset& dataset, std::span<const int> train_sizes, int synth_count,
                              const SyntheticSource& source, std::uint64_t seed, const HarnessConfig& cfg);

struct AnomalySetup {
  std::vector<int> anomaly_classes;
  std::vector<int> legitimate_classes;
  /// Training traces kept per anomaly class.
  int anomaly_train_count = 5;
  /// Prefix length in samples; 0 keeps full traces.
  std::size_t prefix_length = 0;

  void validate(const PreparedDataset& dataset) const;
};

/// Seeded draw of disjoint anomaly and legitimate class sets.
AnomalySetup choose_anomaly_setup(const PreparedDataset& dataset, int anomaly_count, int legitimate_count,
                                  std::uint64_t seed);

/// Number of bins covering `seconds` at `bin_width`.
std::size_t prefix_for_duration(double seconds, double bin_width);

/// Classifier over legitimate + anomaly classes; accuracy restricted to
/// anomaly-class test traces. The generator (when the scenario uses one) is
/// fitted on the same imbalanced training set.
EvalRow anomaly_case1(const PreparedDataset& dataset, const AnomalySetup& setup, Scenario scenario, int synth_count,
                      const SyntheticSource& source, std::uint64_t seed, const HarnessConfig& cfg);

/// H(p) = -sum p ln p, with 0 ln 0 = 0.
double predictive_entropy(std::span<const double> probabilities);

struct UncertaintyReport {
  int ensemble_size = 0;
  int num_classes = 0;
  std::vector<std::string> legitimate_ids;
  std::vector<double> legitimate_entropy;
  std::vector<std::string> anomaly_ids;
  std::vector<double> anomaly_entropy;

  double mean_legitimate() const;
  double mean_anomaly() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// M classifiers trained on legitimate classes only, with seeds derived from
/// `seed`; entropy of the ensemble-mean probabilities per test trace.
UncertaintyReport anomaly_case2_uncertainty(const PreparedDataset& dataset, const AnomalySetup& setup, int ensemble,
                                            std::uint64_t seed, const HarnessConfig& cfg);

/// Items restricted to their first m samples. Items with a trace are
/// re-encoded through crop_prefix and enhanced; image-only synthetic items
/// are cropped to the proportional top-left block and resized back.
ItemSet crop_items(const ItemSet& items, std::size_t m, std::size_t full_length, const EnhanceConfig& enhance);

/// Rows keyed by prefix length for each requested scenario.
EvalReport realtime_eval(const PreparedDataset& dataset, std::span<const std::size_t> prefixes,
                         std::span<const Scenario> scenarios, const ItemSet& synthetic_pool, int synth_count,
                         std::uint64_t seed, const HarnessConfig& cfg);

/// (a) conv1d on traces vs conv2d on images at 80/40/20% of each class;
/// (b) conv2d trained with 1D-model vs 2D-model synthetic data under synth
/// and ori+synth, plus the original baseline.
EvalReport compare_1d_2d(const PreparedDataset& dataset, const ItemSet& pool_2d, const ItemSet& pool_1d,
                         int synth_count, std::uint64_t seed, const HarnessConfig& cfg);

/// original, synth@c for each count ascending, then ori+synth at the
/// largest count. Counts select nested prefixes of the same pool.
EvalReport synth_count_sweep(const PreparedDataset& dataset, const ItemSet& synthetic_pool, std::span<const int> counts,
                             std::uint64_t seed, const HarnessConfig& cfg);

}  // namespace trafficdiff
