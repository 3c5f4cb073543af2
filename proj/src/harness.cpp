#include "trafficdiff/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "trafficdiff/gasf.hpp"
#include "trafficdiff/seed.hpp"

namespace trafficdiff {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kOriginal: return "original";
    case Scenario::kSynth: return "synth";
    case Scenario::kOriSynth: return "ori+synth";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "original") return Scenario::kOriginal;
  if (name == "synth") return Scenario::kSynth;
  if (name == "ori+synth") return Scenario::kOriSynth;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

std::string to_string(HierarchyLevel level) {
  switch (level) {
    case HierarchyLevel::kL1: return "L1";
    case HierarchyLevel::kL2: return "L2";
    case HierarchyLevel::kL3: return "L3";
  }
  return "unknown";
}

std::size_t PreparedDataset::trace_length() const {
  for (const auto& set : {&train, &test})
    for (const auto& item : *set)
      if (!item.trace.empty()) return item.trace.size();
  return 0;
}

std::vector<int> PreparedDataset::classes() const {
  std::set<int> labels;
  for (const auto& item : train) labels.insert(item.label);
  return {labels.begin(), labels.end()};
}

Item make_item(const NormalizedTrace& trace, const EnhanceConfig& enhance) {
  Item item;
  item.id = trace.trace_id;
  item.label = trace.class_label;
  item.trace = trace.samples;
  item.image = enhance_pipeline(gasf_encode(trace), enhance);
  return item;
}

PreparedDataset prepare_dataset(std::span<const NormalizedTrace> traces, const SplitSpec& split,
                                const EnhanceConfig& enhance, std::string traffic_type, std::string platform) {
  if (traces.empty()) throw std::invalid_argument("prepare_dataset: no traces");
  const auto parts = split_dataset(traces, split);
  PreparedDataset ds;
  ds.dataset_id = traces.front().dataset_id;
  ds.traffic_type = std::move(traffic_type);
  ds.platform = std::move(platform);
  ds.enhance = enhance;
  for (const auto& t : parts.train) ds.train.push_back(make_item(t, enhance));
  for (const auto& t : parts.test) ds.test.push_back(make_item(t, enhance));
  return ds;
}

namespace {

std::vector<PixelImage> images_of(const ItemSet& items) {
  std::vector<PixelImage> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    PixelImage img = item.image;
    img.provenance.class_label = item.label;
    out.push_back(std::move(img));
  }
  return out;
}

std::string dataset_of(const ItemSet& items) {
  return items.empty() ? std::string() : items.front().image.provenance.dataset_id;
}

std::vector<int> classes_of(const ItemSet& items) {
  std::set<int> labels;
  for (const auto& item : items) labels.insert(item.label);
  return {labels.begin(), labels.end()};
}

ItemSet first_per_class(const ItemSet& items, int count) {
  std::map<int, int> taken;
  ItemSet out;
  for (const auto& item : items)
    if (taken[item.label] < count) {
      ++taken[item.label];
      out.push_back(item);
    }
  return out;
}

std::map<int, int> count_per_class(const ItemSet& items) {
  std::map<int, int> counts;
  for (const auto& item : items) ++counts[item.label];
  return counts;
}

}  // namespace

ItemSet synthetic_items(std::span<const PixelImage> images, const std::string& tag) {
  ItemSet out;
  std::map<int, int> index;
  for (const auto& img : images) {
    Item item;
    item.label = img.provenance.class_label;
    item.id = "synth/" + tag + "/" + img.provenance.dataset_id + "/" + std::to_string(item.label) + "/" +
              std::to_string(index[item.label]++);
    item.synthetic = true;
    item.image = img;
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<int> GeneratorSet::classes() const {
  std::vector<int> out;
  for (const auto& m : models) out.insert(out.end(), m.class_set().begin(), m.class_set().end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PixelImage> GeneratorSet::sample(int label, int count, std::uint64_t seed) {
  for (auto& m : models) {
    const auto& cs = m.class_set();
    if (std::find(cs.begin(), cs.end(), label) == cs.end()) continue;
    std::mt19937_64 rng(derive_seed(seed, "sample/" + std::to_string(label)));
    return trafficdiff::sample(m, label, count, rng);
  }
  throw std::invalid_argument("no generator for class " + std::to_string(label));
}

std::vector<PixelImage> GeneratorSet::sample_all(int per_class, std::uint64_t seed) {
  std::vector<PixelImage> out;
  for (int label : classes()) {
    auto s = sample(label, per_class, seed);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

GeneratorSet fit_generators(std::span<const PixelImage> images, const DiffusionConfig& cfg,
                            const std::string& trained_on, std::uint64_t seed,
                            const std::function<void(int, double)>& progress) {
  GeneratorSet set;
  if (cfg.denoiser.num_classes > 0) {
    set.models.push_back(trafficdiff::train(images, cfg, trained_on, derive_seed(seed, "generator"), progress));
    return set;
  }
  std::set<int> labels;
  for (const auto& img : images) labels.insert(img.provenance.class_label);
  for (int label : labels) {
    std::vector<PixelImage> subset;
    for (const auto& img : images)
      if (img.provenance.class_label == label) subset.push_back(img);
    set.models.push_back(trafficdiff::train(subset, cfg, trained_on,
                                            derive_seed(seed, "generator/" + std::to_string(label)), progress));
  }
  return set;
}

std::vector<PixelImage> trace_images(const ItemSet& items) {
  std::vector<PixelImage> series;
  for (const auto& item : items) {
    if (item.trace.empty()) throw std::invalid_argument("1D generator needs items with traces");
    PixelImage row(1, item.trace.size(), PixelStage::kUnit);
    std::transform(item.trace.begin(), item.trace.end(), row.pixels.begin(),
                   [](double v) { return static_cast<float>(v); });
    row.provenance = {item.image.provenance.dataset_id, item.label, item.trace.size()};
    series.push_back(std::move(row));
  }
  return series;
}

ItemSet items_from_series(std::span<const PixelImage> series, const EnhanceConfig& enhance) {
  ItemSet out;
  std::map<int, int> index;
  for (const auto& s : series) {
    NormalizedTrace t;
    t.samples.resize(s.pixels.size());
    std::transform(s.pixels.begin(), s.pixels.end(), t.samples.begin(),
                   [](float v) { return std::clamp(static_cast<double>(v), 0.0, 1.0); });
    t.class_label = s.provenance.class_label;
    t.dataset_id = s.provenance.dataset_id;
    t.trace_id = "synth/1d/" + t.dataset_id + "/" + std::to_string(t.class_label) + "/" +
                 std::to_string(index[t.class_label]++);
    Item item = make_item(t, enhance);
    item.synthetic = true;
    out.push_back(std::move(item));
  }
  return out;
}

SyntheticSource diffusion_source_2d(DiffusionConfig cfg) {
  return [cfg](const ItemSet& train, int per_class, std::uint64_t seed) {
    auto gens = fit_generators(images_of(train), cfg, dataset_of(train), derive_seed(seed, "dm2d"));
    return synthetic_items(gens.sample_all(per_class, derive_seed(seed, "dm2d/sample")), "2d");
  };
}

SyntheticSource diffusion_source_1d(DiffusionConfig cfg, EnhanceConfig enhance) {
  if (!cfg.denoiser.one_d) throw std::invalid_argument("diffusion_source_1d needs a one_d denoiser");
  return [cfg, enhance](const ItemSet& train, int per_class, std::uint64_t seed) {
    auto gens = fit_generators(trace_images(train), cfg, dataset_of(train), derive_seed(seed, "dm1d"));
    return items_from_series(gens.sample_all(per_class, derive_seed(seed, "dm1d/sample")), enhance);
  };
}

ItemSet build_training_set(Scenario scenario, const ItemSet& original_train, const ItemSet& synthetic_pool,
                           int synth_count) {
  if (scenario == Scenario::kOriginal) return original_train;
  if (synth_count <= 0) throw std::invalid_argument("synthetic scenarios need synth_count > 0");
  const auto classes = classes_of(original_train);
  const auto available = count_per_class(synthetic_pool);
  for (int label : classes) {
    auto it = available.find(label);
    if (it == available.end() || it->second < synth_count)
      throw std::invalid_argument("synthetic pool has fewer than " + std::to_string(synth_count) +
                                  " items for class " + std::to_string(label));
  }
  const std::set<int> wanted(classes.begin(), classes.end());
  ItemSet out;
  if (scenario == Scenario::kOriSynth) out = original_train;
  std::map<int, int> taken;
  for (const auto& item : synthetic_pool)
    if (wanted.count(item.label) && taken[item.label] < synth_count) {
      ++taken[item.label];
      out.push_back(item);
    }
  return out;
}

FeatureSet to_features(const ItemSet& items, bool one_d) {
  FeatureSet fs;
  if (items.empty()) return fs;
  if (one_d) {
    fs.height = 1;
    fs.width = static_cast<int>(items.front().trace.size());
    for (const auto& item : items) {
      if (item.trace.empty()) throw std::invalid_argument("item '" + item.id + "' has no trace for a 1D classifier");
      fs.add(std::vector<float>(item.trace.begin(), item.trace.end()), item.label);
    }
  } else {
    fs.height = static_cast<int>(items.front().image.height);
    fs.width = static_cast<int>(items.front().image.width);
    for (const auto& item : items) fs.add(item.image.pixels, item.label);
  }
  return fs;
}

double train_and_eval(ClassifierKind kind, const ItemSet& train, const ItemSet& test, std::uint64_t seed,
                      const HarnessConfig& cfg) {
  if (test.empty()) throw std::invalid_argument("empty test set");
  std::unordered_set<std::string> train_ids;
  for (const auto& item : train) train_ids.insert(item.id);
  const auto train_classes = classes_of(train);
  for (const auto& item : test) {
    if (item.synthetic) throw std::invalid_argument("synthetic item '" + item.id + "' in test set");
    if (train_ids.count(item.id)) throw std::invalid_argument("training item '" + item.id + "' in test set");
    if (!std::binary_search(train_classes.begin(), train_classes.end(), item.label))
      throw std::invalid_argument("test class " + std::to_string(item.label) + " absent from training set");
  }
  const bool one_d = kind == ClassifierKind::kConv1d;
  auto clf = make_classifier(kind, cfg.classifier_cfg);
  clf->fit(to_features(train, one_d), seed);
  const auto test_fs = to_features(test, one_d);
  const auto pred = clf->predict(test_fs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test_fs.labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

namespace {

// Quotes fields holding separators or quotes, doubling embedded quotes.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char ch : v) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  return fields;
}

}  // namespace

void EvalReport::append(const EvalReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "protocol,dataset,level,scenario,classifier,train_size,synth_count,crop_length,variant,accuracy,seed\n";
  out.precision(17);
  for (const auto& r : rows)
    out << csv_field(r.protocol) << ',' << csv_field(r.dataset) << ',' << csv_field(r.level) << ','
        << csv_field(r.scenario) << ',' << csv_field(r.classifier) << ',' << r.train_size << ',' << r.synth_count
        << ',' << r.crop_length << ',' << csv_field(r.variant) << ',' << r.accuracy << ',' << r.seed << '\n';
  return out.str();
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
}

EvalReport EvalReport::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EvalReport report;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw std::runtime_error("malformed report row in " + path.string() + ": " + line);
    EvalRow r;
    r.protocol = f[0];
    r.dataset = f[1];
    r.level = f[2];
    r.scenario = f[3];
    r.classifier = f[4];
    r.train_size = std::stoi(f[5]);
    r.synth_count = std::stoi(f[6]);
    r.crop_length = std::stoi(f[7]);
    r.variant = f[8];
    r.accuracy = std::stod(f[9]);
    r.seed = std::stoull(f[10]);
    report.rows.push_back(std::move(r));
  }
  return report;
}

namespace {

int per_class_size(const ItemSet& items) {
  const auto counts = count_per_class(items);
  int mx = 0;
  for (const auto& [_, c] : counts) mx = std::max(mx, c);
  return mx;
}

EvalRow make_row(std::string protocol, std::string dataset, std::string level, Scenario scenario, const ItemSet& orig,
                 int synth_count, std::uint64_t seed, const HarnessConfig& cfg, double accuracy) {
  EvalRow r;
  r.protocol = std::move(protocol);
  r.dataset = std::move(dataset);
  r.level = std::move(level);
  r.scenario = to_string(scenario);
  r.classifier = to_string(cfg.classifier);
  r.train_size = per_class_size(orig);
  r.synth_count = scenario == Scenario::kOriginal ? 0 : synth_count;
  r.accuracy = accuracy;
  r.seed = seed;
  return r;
}

ItemSet relabel(const ItemSet& items, int label) {
  ItemSet out = items;
  for (auto& item : out) item.label = label;
  return out;
}

}  // namespace

EvalReport hierarchical_eval(std::span<const PreparedDataset> datasets,
                             const std::map<std::string, ItemSet>& synthetic_pools, int synth_count,
                             std::span<const Scenario> scenarios, std::uint64_t seed, const HarnessConfig& cfg) {
  if (datasets.empty()) throw std::invalid_argument("hierarchical_eval: no datasets");
  const auto pool_for = [&](const PreparedDataset& ds) -> const ItemSet& {
    static const ItemSet empty;
    auto it = synthetic_pools.find(ds.dataset_id);
    return it == synthetic_pools.end() ? empty : it->second;
  };

  EvalReport report;
  std::set<std::string> types;
  for (const auto& ds : datasets) types.insert(ds.traffic_type);
  if (datasets.size() > 1 && types.count(""))
    throw std::invalid_argument("hierarchical_eval: dataset without a traffic type");

  // Grouped levels: each group contributes the per-dataset training sets of
  // the scenario, relabeled to the group index.
  const auto grouped = [&](const std::string& level, const std::string& name,
                           const std::vector<std::pair<const PreparedDataset*, int>>& members) {
    for (Scenario sc : scenarios) {
      ItemSet train, test, orig;
      for (const auto& [ds, group] : members) {
        auto part = build_training_set(sc, ds->train, pool_for(*ds), synth_count);
        for (auto& item : part) item.label = group;
        train.insert(train.end(), part.begin(), part.end());
        auto o = relabel(ds->train, group);
        orig.insert(orig.end(), o.begin(), o.end());
        auto t = relabel(ds->test, group);
        test.insert(test.end(), t.begin(), t.end());
      }
      const double acc = train_and_eval(cfg.classifier, train, test, seed, cfg);
      report.rows.push_back(make_row("hierarchical", name, level, sc, orig, synth_count, seed, cfg, acc));
    }
  };

  if (types.size() >= 2) {
    std::vector<std::pair<const PreparedDataset*, int>> members;
    const std::vector<std::string> type_list(types.begin(), types.end());
    for (const auto& ds : datasets)
      members.emplace_back(&ds, static_cast<int>(std::find(type_list.begin(), type_list.end(), ds.traffic_type) -
                                                 type_list.begin()));
    grouped("L1", "all", members);
  }
  for (const auto& type : types) {
    std::vector<std::string> platforms;
    for (const auto& ds : datasets)
      if (ds.traffic_type == type && !ds.platform.empty() &&
          std::find(platforms.begin(), platforms.end(), ds.platform) == platforms.end())
        platforms.push_back(ds.platform);
    if (platforms.size() < 2) continue;
    std::sort(platforms.begin(), platforms.end());
    std::vector<std::pair<const PreparedDataset*, int>> members;
    for (const auto& ds : datasets)
      if (ds.traffic_type == type && !ds.platform.empty())
        members.emplace_back(&ds, static_cast<int>(std::find(platforms.begin(), platforms.end(), ds.platform) -
                                                   platforms.begin()));
    grouped("L2", type.empty() ? "all" : type, members);
  }
  for (const auto& ds : datasets)
    for (Scenario sc : scenarios) {
      const auto train = build_training_set(sc, ds.train, pool_for(ds), synth_count);
      const double acc = train_and_eval(cfg.classifier, train, ds.test, seed, cfg);
      report.rows.push_back(make_row("hierarchical", ds.dataset_id, "L3", sc, ds.train, synth_count, seed, cfg, acc));
    }
  return report;
}

EvalReport limited_data_sweep(const PreparedDataset& dataset, std::span<const int> train_sizes, int synth_count,
                              const SyntheticSource& source, std::uint64_t seed, const HarnessConfig& cfg) {
  if (!source) throw std::invalid_argument("limited_data_sweep needs a synthetic source");
  const auto available = count_per_class(dataset.train);
  EvalReport report;
  for (int s : train_sizes) {
    if (s <= 0) throw std::invalid_argument("limited_data_sweep: train size must be positive");
    for (const auto& [label, c] : available)
      if (c < s)
        throw std::invalid_argument("limited_data_sweep: class " + std::to_string(label) + " has only " +
                                    std::to_string(c) + " training traces");
    const auto subset = first_per_class(dataset.train, s);
    const auto pool = source(subset, synth_count, derive_seed(seed, "limited/" + std::to_string(s)));
    for (Scenario sc : kAllScenarios) {
      const auto train = build_training_set(sc, subset, pool, synth_count);
      const double acc = train_and_eval(cfg.classifier, train, dataset.test, seed, cfg);
      auto row = make_row("limited", dataset.dataset_id, "L3", sc, subset, synth_count, seed, cfg, acc);
      row.train_size = s;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

void AnomalySetup::validate(const PreparedDataset& dataset) const {
  if (anomaly_classes.empty() || legitimate_classes.empty())
    throw std::invalid_argument("anomaly setup needs anomaly and legitimate classes");
  for (int a : anomaly_classes)
    if (std::find(legitimate_classes.begin(), legitimate_classes.end(), a) != legitimate_classes.end())
      throw std::invalid_argument("class " + std::to_string(a) + " is both anomaly and legitimate");
  const auto classes = dataset.classes();
  for (const auto* set : {&anomaly_classes, &legitimate_classes})
    for (int c : *set)
      if (!std::binary_search(classes.begin(), classes.end(), c))
        throw std::invalid_argument("class " + std::to_string(c) + " not in dataset " + dataset.dataset_id);
  if (anomaly_train_count <= 0) throw std::invalid_argument("anomaly_train_count must be positive");
  if (prefix_length > dataset.trace_length())
    throw std::invalid_argument("prefix length exceeds the trace length");
}

AnomalySetup choose_anomaly_setup(const PreparedDataset& dataset, int anomaly_count, int legitimate_count,
                                  std::uint64_t seed) {
  auto classes = dataset.classes();
  if (anomaly_count + legitimate_count > static_cast<int>(classes.size()))
    throw std::invalid_argument("dataset has too few classes for the anomaly setup");
  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  AnomalySetup setup;
  setup.anomaly_classes.assign(classes.begin(), classes.begin() + anomaly_count);
  setup.legitimate_classes.assign(classes.begin() + anomaly_count,
                                  classes.begin() + anomaly_count + legitimate_count);
  std::sort(setup.anomaly_classes.begin(), setup.anomaly_classes.end());
  std::sort(setup.legitimate_classes.begin(), setup.legitimate_classes.end());
  return setup;
}

std::size_t prefix_for_duration(double seconds, double bin_width) {
  if (!(seconds > 0.0) || !(bin_width > 0.0)) throw std::invalid_argument("duration and bin width must be positive");
  return static_cast<std::size_t>(std::llround(seconds / bin_width));
}

namespace {

ItemSet select_classes(const ItemSet& items, const std::vector<int>& classes) {
  ItemSet out;
  for (const auto& item : items)
    if (std::find(classes.begin(), classes.end(), item.label) != classes.end()) out.push_back(item);
  return out;
}

}  // namespace

EvalRow anomaly_case1(const PreparedDataset& dataset, const AnomalySetup& setup, Scenario scenario, int synth_count,
                      const SyntheticSource& source, std::uint64_t seed, const HarnessConfig& cfg) {
  setup.validate(dataset);
  ItemSet original = select_classes(dataset.train, setup.legitimate_classes);
  const auto anomalies = first_per_class(select_classes(dataset.train, setup.anomaly_classes), setup.anomaly_train_count);
  original.insert(original.end(), anomalies.begin(), anomalies.end());
  ItemSet pool;
  if (scenario != Scenario::kOriginal) {
    if (!source) throw std::invalid_argument("anomaly_case1: synthetic scenario without a source");
    pool = source(original, synth_count, derive_seed(seed, "anomaly/source"));
  }
  ItemSet test = select_classes(dataset.test, setup.anomaly_classes);
  ItemSet train = build_training_set(scenario, original, pool, synth_count);
  if (setup.prefix_length > 0) {
    const auto n = dataset.trace_length();
    train = crop_items(train, setup.prefix_length, n, dataset.enhance);
    test = crop_items(test, setup.prefix_length, n, dataset.enhance);
  }
  const double acc = train_and_eval(cfg.classifier, train, test, seed, cfg);
  auto row = make_row("anomaly1", dataset.dataset_id, "L3", scenario, anomalies, synth_count, seed, cfg, acc);
  row.train_size = setup.anomaly_train_count;
  row.crop_length = static_cast<int>(setup.prefix_length);
  std::string variant;
  for (int a : setup.anomaly_classes) variant += (variant.empty() ? "" : "+") + std::to_string(a);
  row.variant = "anomaly=" + variant;
  return row;
}

double predictive_entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities) {
    if (p < 0.0 || p > 1.0 + 1e-9) throw std::invalid_argument("probability outside [0,1]");
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(std::max<std::size_t>(probabilities.size(), 1))));
}

double UncertaintyReport::mean_legitimate() const {
  return legitimate_entropy.empty()
             ? 0.0
             : std::accumulate(legitimate_entropy.begin(), legitimate_entropy.end(), 0.0) /
                   static_cast<double>(legitimate_entropy.size());
}

double UncertaintyReport::mean_anomaly() const {
  return anomaly_entropy.empty() ? 0.0
                                 : std::accumulate(anomaly_entropy.begin(), anomaly_entropy.end(), 0.0) /
                                       static_cast<double>(anomaly_entropy.size());
}

void UncertaintyReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "trace_id,population,entropy,ensemble_size,num_classes\n";
  for (std::size_t i = 0; i < legitimate_entropy.size(); ++i)
    out << legitimate_ids[i] << ",legitimate," << legitimate_entropy[i] << ',' << ensemble_size << ','
        << num_classes << '\n';
  for (std::size_t i = 0; i < anomaly_entropy.size(); ++i)
    out << anomaly_ids[i] << ",anomaly," << anomaly_entropy[i] << ',' << ensemble_size << ',' << num_classes << '\n';
}

UncertaintyReport anomaly_case2_uncertainty(const PreparedDataset& dataset, const AnomalySetup& setup, int ensemble,
                                            std::uint64_t seed, const HarnessConfig& cfg) {
  if (ensemble < 2) throw std::invalid_argument("ensemble size must be at least 2");
  setup.validate(dataset);
  ItemSet train = select_classes(dataset.train, setup.legitimate_classes);
  ItemSet legit = select_classes(dataset.test, setup.legitimate_classes);
  ItemSet anomalous = select_classes(dataset.test, setup.anomaly_classes);
  if (setup.prefix_length > 0) {
    const auto n = dataset.trace_length();
    train = crop_items(train, setup.prefix_length, n, dataset.enhance);
    legit = crop_items(legit, setup.prefix_length, n, dataset.enhance);
    anomalous = crop_items(anomalous, setup.prefix_length, n, dataset.enhance);
  }
  const bool one_d = cfg.classifier == ClassifierKind::kConv1d;
  const auto train_fs = to_features(train, one_d);
  const auto legit_fs = to_features(legit, one_d);
  const auto anomaly_fs = to_features(anomalous, one_d);

  UncertaintyReport report;
  report.ensemble_size = ensemble;
  report.num_classes = static_cast<int>(setup.legitimate_classes.size());
  const std::vector<double> zeros(setup.legitimate_classes.size(), 0.0);
  std::vector<std::vector<double>> legit_mean(legit.size(), zeros), anomaly_mean(anomalous.size(), zeros);
  for (int m = 0; m < ensemble; ++m) {
    auto clf = make_classifier(cfg.classifier, cfg.classifier_cfg);
    clf->fit(train_fs, derive_seed(seed, static_cast<std::uint64_t>(m)));
    const auto accumulate = [&](const FeatureSet& fs, std::vector<std::vector<double>>& mean) {
      if (fs.rows.empty()) return;
      const auto p = clf->predict_proba(fs);
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t k = 0; k < p[i].size(); ++k) mean[i][k] += p[i][k] / ensemble;
    };
    accumulate(legit_fs, legit_mean);
    accumulate(anomaly_fs, anomaly_mean);
  }
  for (std::size_t i = 0; i < legit.size(); ++i) {
    report.legitimate_ids.push_back(legit[i].id);
    report.legitimate_entropy.push_back(predictive_entropy(legit_mean[i]));
  }
  for (std::size_t i = 0; i < anomalous.size(); ++i) {
    report.anomaly_ids.push_back(anomalous[i].id);
    report.anomaly_entropy.push_back(predictive_entropy(anomaly_mean[i]));
  }
  return report;
}

ItemSet crop_items(const ItemSet& items, std::size_t m, std::size_t full_length, const EnhanceConfig& enhance) {
  if (m == 0 || m > full_length) throw std::invalid_argument("prefix length must be in [1, trace length]");
  ItemSet out;
  out.reserve(items.size());
  for (const auto& item : items) {
    Item c = item;
    if (!item.trace.empty()) {
      auto gasf = gasf_encode(item.trace);
      gasf.class_label = item.label;
      gasf.dataset_id = item.image.provenance.dataset_id;
      c.image = enhance_pipeline(crop_prefix(gasf, m), enhance);
      c.trace.resize(m);
    } else {
      const auto r = item.image.height;
      const auto side = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(static_cast<double>(m) / static_cast<double>(full_length) *
                                                   static_cast<double>(r))));
      PixelImage block(side, side, item.image.stage);
      block.provenance = item.image.provenance;
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) block(y, x) = item.image(y, x);
      c.image = resize_area(block, r, item.image.width);
    }
    out.push_back(std::move(c));
  }
  return out;
}

EvalReport realtime_eval(const PreparedDataset& dataset, std::span<const std::size_t> prefixes,
                         std::span<const Scenario> scenarios, const ItemSet& synthetic_pool, int synth_count,
                         std::uint64_t seed, const HarnessConfig& cfg) {
  const auto n = dataset.trace_length();
  EvalReport report;
  for (auto m : prefixes) {
    if (m == 0 || m > n) throw std::invalid_argument("prefix " + std::to_string(m) + " outside [1, trace length]");
    const auto train = crop_items(dataset.train, m, n, dataset.enhance);
    const auto test = crop_items(dataset.test, m, n, dataset.enhance);
    const bool needs_pool = std::any_of(scenarios.begin(), scenarios.end(),
                                        [](Scenario s) { return s != Scenario::kOriginal; });
    const auto pool = needs_pool ? crop_items(synthetic_pool, m, n, dataset.enhance) : ItemSet{};
    for (Scenario sc : scenarios) {
      const double acc =
          train_and_eval(cfg.classifier, build_training_set(sc, train, pool, synth_count), test, seed, cfg);
      auto row = make_row("realtime", dataset.dataset_id, "L3", sc, dataset.train, synth_count, seed, cfg, acc);
      row.crop_length = static_cast<int>(m);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

EvalReport compare_1d_2d(const PreparedDataset& dataset, const ItemSet& pool_2d, const ItemSet& pool_1d,
                         int synth_count, std::uint64_t seed, const HarnessConfig& cfg) {
  if (pool_1d.empty()) throw std::invalid_argument("compare_1d_2d needs samples from a 1D diffusion model");
  if (pool_2d.empty()) throw std::invalid_argument("compare_1d_2d needs samples from a 2D diffusion model");
  EvalReport report;

  // Training fractions relative to each class's full trace count.
  auto totals = count_per_class(dataset.train);
  for (const auto& [label, c] : count_per_class(dataset.test)) totals[label] += c;
  int total = 0;
  for (const auto& [_, c] : totals) total = std::max(total, c);
  for (int pct : {80, 40, 20}) {
    const int count = std::max(1, std::min(per_class_size(dataset.train), total * pct / 100));
    const auto subset = first_per_class(dataset.train, count);
    for (ClassifierKind kind : {ClassifierKind::kConv1d, ClassifierKind::kConv2d}) {
      HarnessConfig c = cfg;
      c.classifier = kind;
      const double acc = train_and_eval(kind, subset, dataset.test, seed, c);
      auto row = make_row("1d2d-fraction", dataset.dataset_id, "L3", Scenario::kOriginal, subset, 0, seed, c, acc);
      row.variant = std::to_string(pct) + "%-" + (kind == ClassifierKind::kConv1d ? "1D" : "2D");
      report.rows.push_back(std::move(row));
    }
  }

  HarnessConfig c2 = cfg;
  c2.classifier = ClassifierKind::kConv2d;
  {
    const double acc = train_and_eval(c2.classifier, dataset.train, dataset.test, seed, c2);
    auto row = make_row("1d2d", dataset.dataset_id, "L3", Scenario::kOriginal, dataset.train, 0, seed, c2, acc);
    row.variant = "original";
    report.rows.push_back(std::move(row));
  }
  for (Scenario sc : {Scenario::kSynth, Scenario::kOriSynth})
    for (const auto* pool : {&pool_1d, &pool_2d}) {
      const auto train = build_training_set(sc, dataset.train, *pool, synth_count);
      const double acc = train_and_eval(c2.classifier, train, dataset.test, seed, c2);
      auto row = make_row("1d2d", dataset.dataset_id, "L3", sc, dataset.train, synth_count, seed, c2, acc);
      row.variant = to_string(sc) + "-" + (pool == &pool_1d ? "1D" : "2D");
      report.rows.push_back(std::move(row));
    }
  return report;
}

EvalReport synth_count_sweep(const PreparedDataset& dataset, const ItemSet& synthetic_pool, std::span<const int> counts,
                             std::uint64_t seed, const HarnessConfig& cfg) {
  if (counts.empty()) throw std::invalid_argument("synth_count_sweep: no counts");
  std::vector<int> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  EvalReport report;
  const auto run = [&](Scenario sc, int count, const std::string& variant) {
    const double acc =
        train_and_eval(cfg.classifier, build_training_set(sc, dataset.train, synthetic_pool, count), dataset.test,
                       seed, cfg);
    auto row = make_row("synthsweep", dataset.dataset_id, "L3", sc, dataset.train, count, seed, cfg, acc);
    row.variant = variant;
    report.rows.push_back(std::move(row));
  };
  run(Scenario::kOriginal, 0, "original");
  for (int c : sorted) run(Scenario::kSynth, c, "synth@" + std::to_string(c));
  run(Scenario::kOriSynth, sorted.back(), "ori+synth");
  return report;
}

}  // namespace trafficdiff
