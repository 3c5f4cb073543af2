#include "trafficdiff/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json_convert.hpp"
#include "svg_plot.hpp"
#include "trafficdiff/fidelity.hpp"
#include "trafficdiff/gasf.hpp"
#include "trafficdiff/seed.hpp"
#include "trafficdiff/storage.hpp"

namespace trafficdiff {

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

namespace {

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

Json toy_to_json(const ToyFamily& t) {
  return Json{{"base_cycles", t.base_cycles},   {"cycle_step", t.cycle_step}, {"cycle_jitter", t.cycle_jitter},
              {"phase_jitter", t.phase_jitter}, {"noise", t.noise},           {"burst_rate", t.burst_rate},
              {"burst_scale", t.burst_scale},   {"random_walk_classes", t.random_walk_classes}};
}

ToyFamily toy_from_json(const Json& j) {
  check_keys(j, {"base_cycles", "cycle_step", "cycle_jitter", "phase_jitter", "noise", "burst_rate", "burst_scale",
                 "random_walk_classes"},
             "toy");
  ToyFamily t;
  t.base_cycles = j.value("base_cycles", t.base_cycles);
  t.cycle_step = j.value("cycle_step", t.cycle_step);
  t.cycle_jitter = j.value("cycle_jitter", t.cycle_jitter);
  t.phase_jitter = j.value("phase_jitter", t.phase_jitter);
  t.noise = j.value("noise", t.noise);
  t.burst_rate = j.value("burst_rate", t.burst_rate);
  t.burst_scale = j.value("burst_scale", t.burst_scale);
  t.random_walk_classes = j.value("random_walk_classes", t.random_walk_classes);
  return t;
}

Json classifier_cfg_to_json(const ClassifierConfig& c) {
  return Json{{"conv_channels", c.conv_channels},
              {"conv_epochs", c.conv_epochs},
              {"mlp_hidden", c.mlp_hidden},
              {"mlp_epochs", c.mlp_epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"nb_var_smoothing", c.nb_var_smoothing},
              {"forest_trees", c.forest_trees},
              {"forest_max_depth", c.forest_max_depth},
              {"boost_rounds", c.boost_rounds},
              {"boost_max_depth", c.boost_max_depth},
              {"boost_learning_rate", c.boost_learning_rate},
              {"boost_lambda", c.boost_lambda},
              {"boost_colsample", c.boost_colsample}};
}

ClassifierConfig classifier_cfg_from_json(const Json& j) {
  check_keys(j, {"conv_channels", "conv_epochs", "mlp_hidden", "mlp_epochs", "batch_size", "learning_rate",
                 "nb_var_smoothing", "forest_trees", "forest_max_depth", "boost_rounds", "boost_max_depth",
                 "boost_learning_rate", "boost_lambda", "boost_colsample"},
             "classifier_params");
  ClassifierConfig c;
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.conv_epochs = j.value("conv_epochs", c.conv_epochs);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.mlp_epochs = j.value("mlp_epochs", c.mlp_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.nb_var_smoothing = j.value("nb_var_smoothing", c.nb_var_smoothing);
  c.forest_trees = j.value("forest_trees", c.forest_trees);
  c.forest_max_depth = j.value("forest_max_depth", c.forest_max_depth);
  c.boost_rounds = j.value("boost_rounds", c.boost_rounds);
  c.boost_max_depth = j.value("boost_max_depth", c.boost_max_depth);
  c.boost_learning_rate = j.value("boost_learning_rate", c.boost_learning_rate);
  c.boost_lambda = j.value("boost_lambda", c.boost_lambda);
  c.boost_colsample = j.value("boost_colsample", c.boost_colsample);
  return c;
}

Json diffusion_to_json(const DiffusionConfig& cfg) {
  Json j = to_json(cfg);
  j["conditional"] = cfg.denoiser.num_classes > 0;
  j["denoiser"].erase("num_classes");
  return j;
}

const std::initializer_list<std::string_view> kDiffusionKeys{
    "diffusion_steps", "beta_start", "beta_end",    "denoiser",   "learning_rate",   "adam_beta1",  "adam_beta2",
    "adam_epsilon",    "clip_norm",  "ema_decay",   "train_steps", "batch_size",     "sample_batch", "checkpoint_every",
    "conditional"};

DiffusionConfig diffusion_from_json(const Json& j, bool one_d) {
  check_keys(j, kDiffusionKeys, one_d ? "diffusion_1d" : "diffusion");
  DiffusionConfig defaults;
  defaults.denoiser.one_d = one_d;
  DiffusionConfig cfg = diffusion_config_from_json(j, defaults);
  cfg.denoiser.one_d = one_d;
  cfg.denoiser.num_classes = j.value("conditional", true) ? 1 : 0;
  return cfg;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view json_text, const fs::path& base_dir) {
  const Json j = Json::parse(json_text);
  check_keys(j, {"seed", "artifact_root", "datasets", "split", "enhance", "diffusion", "diffusion_1d", "sample",
                 "fidelity", "eval"},
             "config");
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("artifact_root")) {
    fs::path root = j["artifact_root"].get<std::string>();
    cfg.artifact_root = root.is_relative() && !base_dir.empty() ? base_dir / root : root;
  }
  if (!j.contains("datasets") || j["datasets"].empty()) throw std::invalid_argument("config: no datasets");
  for (const auto& d : j["datasets"]) {
    check_keys(d, {"dataset_id", "source", "input_dir", "traffic_type", "platform", "target_length", "bin_width",
                   "num_classes", "traces_per_class", "toy"},
               "datasets[]");
    DatasetEntry e;
    e.spec = dataset_spec_from_json(d);
    e.spec.validate();
    e.source = d.value("source", e.source);
    if (e.source != "toy" && e.source != "dir")
      throw std::invalid_argument("config: dataset source must be 'toy' or 'dir'");
    if (e.source == "dir") {
      if (!d.contains("input_dir")) throw std::invalid_argument("config: dir dataset without input_dir");
      fs::path p = d["input_dir"].get<std::string>();
      e.input_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    e.traffic_type = d.value("traffic_type", std::string());
    e.platform = d.value("platform", std::string());
    if (d.contains("toy")) e.toy = toy_from_json(d["toy"]);
    cfg.datasets.push_back(std::move(e));
  }
  std::set<std::string> ids;
  for (const auto& d : cfg.datasets) {
    // Ids name artifact directories and CSV cells.
    const auto& id = d.spec.dataset_id;
    const auto safe = [](unsigned char ch) { return std::isalnum(ch) || ch == '-' || ch == '_' || ch == '.'; };
    if (id.empty() || id == "." || id == ".." || !std::all_of(id.begin(), id.end(), safe))
      throw std::invalid_argument("config: dataset_id '" + id + "' must be non-empty [A-Za-z0-9._-]");
    if (!ids.insert(d.spec.dataset_id).second)
      throw std::invalid_argument("config: duplicate dataset_id '" + d.spec.dataset_id + "'");
  }
  if (j.contains("split")) {
    check_keys(j["split"], {"train_fraction"}, "split");
    cfg.split.train_fraction = j["split"].value("train_fraction", cfg.split.train_fraction);
  }
  if (j.contains("enhance")) {
    check_keys(j["enhance"], {"resolution", "gamma", "A"}, "enhance");
    cfg.enhance = enhance_config_from_json(j["enhance"]);
  }
  cfg.diffusion = diffusion_from_json(j.value("diffusion", Json::object()), false);
  if (j.contains("diffusion_1d") && !j["diffusion_1d"].is_null())
    cfg.diffusion_1d = diffusion_from_json(j["diffusion_1d"], true);
  if (j.contains("sample")) {
    check_keys(j["sample"], {"count"}, "sample");
    cfg.sample_count = j["sample"].value("count", cfg.sample_count);
  }
  if (j.contains("fidelity")) {
    const auto& f = j["fidelity"];
    check_keys(f, {"embedder", "n", "histogram_bins"}, "fidelity");
    cfg.embedder = f.value("embedder", cfg.embedder);
    embedding_dim(cfg.embedder);
    cfg.fid_n = f.value("n", cfg.fid_n);
    cfg.histogram_bins = f.value("histogram_bins", cfg.histogram_bins);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, {"protocols", "classifier", "classifier_params", "synth_count", "limited_sizes",
                   "realtime_prefixes", "synth_counts", "anomaly"},
               "eval");
    cfg.protocols = e.value("protocols", cfg.protocols);
    for (const auto& p : cfg.protocols)
      if (std::find(kProtocols.begin(), kProtocols.end(), p) == kProtocols.end())
        throw std::invalid_argument("config: unknown protocol '" + p + "'");
    cfg.harness.classifier = classifier_from_string(e.value("classifier", std::string("conv2d")));
    if (e.contains("classifier_params")) cfg.harness.classifier_cfg = classifier_cfg_from_json(e["classifier_params"]);
    cfg.synth_count = e.value("synth_count", cfg.synth_count);
    cfg.limited_sizes = e.value("limited_sizes", cfg.limited_sizes);
    cfg.realtime_prefixes = e.value("realtime_prefixes", cfg.realtime_prefixes);
    cfg.synth_counts = e.value("synth_counts", cfg.synth_counts);
    if (e.contains("anomaly")) {
      const auto& a = e["anomaly"];
      check_keys(a, {"anomaly_classes", "legitimate_classes", "train_count", "prefix", "ensemble"}, "anomaly");
      cfg.anomaly_classes = a.value("anomaly_classes", cfg.anomaly_classes);
      cfg.legitimate_classes = a.value("legitimate_classes", cfg.legitimate_classes);
      cfg.anomaly_train_count = a.value("train_count", cfg.anomaly_train_count);
      cfg.anomaly_prefix = a.value("prefix", cfg.anomaly_prefix);
      cfg.ensemble = a.value("ensemble", cfg.ensemble);
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw StageError("config file not found: " + path.string(), 2);
  return parse(read_file(path), path.parent_path());
}

namespace {

OJson sections(const RunConfig& c) {
  OJson j;
  OJson ds = OJson::array();
  for (const auto& d : c.datasets) {
    OJson e = OJson::parse(to_json(d.spec).dump());
    e["source"] = d.source;
    e["input_dir"] = d.input_dir.generic_string();
    e["traffic_type"] = d.traffic_type;
    e["platform"] = d.platform;
    e["toy"] = OJson::parse(toy_to_json(d.toy).dump());
    ds.push_back(std::move(e));
  }
  j["ingest"] = OJson{{"seed", c.seed}, {"datasets", ds}};
  j["encode"] = OJson{{"train_fraction", c.split.train_fraction}};
  j["enhance"] = OJson::parse(to_json(c.enhance).dump());
  j["train-dm"] = OJson{{"diffusion", OJson::parse(diffusion_to_json(c.diffusion).dump())},
                        {"diffusion_1d", c.diffusion_1d ? OJson::parse(diffusion_to_json(*c.diffusion_1d).dump())
                                                        : OJson(nullptr)}};
  j["sample"] = OJson{{"count", c.sample_count}};
  j["fid"] = OJson{{"embedder", c.embedder}, {"n", c.fid_n}, {"histogram_bins", c.histogram_bins}};
  j["eval"] = OJson{{"protocols", c.protocols},
                    {"classifier", to_string(c.harness.classifier)},
                    {"classifier_params", OJson::parse(classifier_cfg_to_json(c.harness.classifier_cfg).dump())},
                    {"synth_count", c.synth_count},
                    {"limited_sizes", c.limited_sizes},
                    {"realtime_prefixes", c.realtime_prefixes},
                    {"synth_counts", c.synth_counts},
                    {"anomaly",
                     {{"anomaly_classes", c.anomaly_classes},
                      {"legitimate_classes", c.legitimate_classes},
                      {"train_count", c.anomaly_train_count},
                      {"prefix", c.anomaly_prefix},
                      {"ensemble", c.ensemble}}}};
  j["report"] = OJson::object();
  return j;
}

}  // namespace

std::string RunConfig::to_json() const {
  const auto s = sections(*this);
  OJson j;
  j["seed"] = seed;
  j["artifact_root"] = artifact_root.generic_string();
  j["datasets"] = s["ingest"]["datasets"];
  j["split"] = {{"train_fraction", split.train_fraction}};
  j["enhance"] = s["enhance"];
  j["diffusion"] = s["train-dm"]["diffusion"];
  if (diffusion_1d) j["diffusion_1d"] = s["train-dm"]["diffusion_1d"];
  j["sample"] = s["sample"];
  j["fidelity"] = s["fid"];
  j["eval"] = s["eval"];
  return j.dump(2);
}

std::string RunConfig::stage_section(std::string_view stage) const {
  const auto s = sections(*this);
  const std::string key(stage);
  if (!s.contains(key)) throw std::invalid_argument("unknown stage '" + key + "'");
  return s[key].dump();
}

fs::path resolve_artifact_root(const RunConfig& cfg, const std::optional<fs::path>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TRAFFICDIFF_ARTIFACT_ROOT"); env && *env) return env;
  return cfg.artifact_root;
}

namespace {

struct Ctx {
  const RunConfig& cfg;
  fs::path root;
  fs::path dir;
  std::uint64_t seed;
  const StageOptions& opt;

  void log(const std::string& msg) const {
    if (opt.log)
      opt.log(msg);
    else
      std::cerr << msg << '\n';
  }
  fs::path stage_dir(std::string_view stage) const { return root / std::string(stage); }
};

std::vector<std::string> effective_protocols(const RunConfig& cfg, const StageOptions& opt) {
  auto p = opt.protocols.empty() ? cfg.protocols : opt.protocols;
  for (const auto& name : p)
    if (std::find(kProtocols.begin(), kProtocols.end(), name) == kProtocols.end())
      throw StageError("unknown eval protocol '" + name + "'", 2);
  return p;
}

std::vector<std::string> upstream_of(std::string_view stage, const RunConfig& cfg, const StageOptions& opt) {
  if (stage == "ingest") return {};
  if (stage == "encode") return {"ingest"};
  if (stage == "enhance") return {"ingest", "encode"};
  if (stage == "train-dm") return {"enhance"};
  if (stage == "sample") return {"enhance", "train-dm"};
  if (stage == "fid") return {"enhance", "sample"};
  if (stage == "eval") {
    const auto p = effective_protocols(cfg, opt);
    const bool pools = std::any_of(p.begin(), p.end(), [](const std::string& s) {
      return s == "hierarchical" || s == "realtime" || s == "1d2d" || s == "synthsweep";
    });
    if (pools) return {"enhance", "sample"};
    return {"enhance"};
  }
  if (stage == "report") return {"fid", "eval"};
  throw StageError("unknown stage '" + std::string(stage) + "'", 2);
}

StageManifest load_manifest(const fs::path& dir) { return StageManifest::from_json(read_file(dir / "manifest.json")); }

// ---- ingest ---------------------------------------------------------------

void do_ingest(const Ctx& c) {
  for (const auto& d : c.cfg.datasets) {
    std::vector<RawTrace> raw;
    if (d.source == "toy") {
      raw = gen_toy_dataset(d.spec, derive_seed(c.seed, d.spec.dataset_id), d.toy);
    } else {
      if (!fs::is_directory(d.input_dir))
        throw StageError("input directory not found: " + d.input_dir.string(), 2);
      try {
        raw = load_dataset_dir(d.input_dir, d.spec.dataset_id);
      } catch (const CsvError& e) {
        std::string msg = e.what();
        for (const auto& f : e.files) msg += "\n  " + f;
        throw StageError(msg, 1);
      }
    }
    std::vector<NormalizedTrace> norm;
    norm.reserve(raw.size());
    for (const auto& r : raw) norm.push_back(prepare_trace(r, d.spec));
    const auto out = c.dir / d.spec.dataset_id;
    fs::create_directories(out);
    write_normalized_traces(out / "traces.csv", norm);
    write_dataset_manifest(out / "dataset.manifest", d.spec);
    c.log("ingest: " + d.spec.dataset_id + " -> " + std::to_string(norm.size()) + " traces");
  }
}

std::vector<NormalizedTrace> ingested(const Ctx& c, const DatasetEntry& d) {
  return read_normalized_traces(c.stage_dir("ingest") / d.spec.dataset_id / "traces.csv", d.spec.dataset_id);
}

// ---- encode ---------------------------------------------------------------

void do_encode(const Ctx& c) {
  for (const auto& d : c.cfg.datasets) {
    const auto traces = ingested(c, d);
    const auto split = split_dataset(traces, c.cfg.split);
    const auto out = c.dir / d.spec.dataset_id;
    fs::create_directories(out);
    std::ostringstream index;
    for (const auto* part : {&split.train, &split.test}) {
      const std::string name = part == &split.train ? "train" : "test";
      std::ostringstream raw(std::ios::binary);
      for (const auto& t : *part) {
        write_gasf_raw(raw, gasf_encode(t));
        index << t.trace_id << ',' << t.class_label << ',' << name << '\n';
      }
      write_file_atomic(out / (name + ".gasf"), raw.str());
    }
    write_file_atomic(out / "split.csv", index.str());
    c.log("encode: " + d.spec.dataset_id + " train " + std::to_string(split.train.size()) + " test " +
          std::to_string(split.test.size()));
  }
}

// ---- enhance --------------------------------------------------------------

// Images are re-derived from the double-precision traces so they match the
// harness' crop/re-encode path exactly; the float32 .gasf files are exports.
void do_enhance(const Ctx& c) {
  for (const auto& d : c.cfg.datasets) {
    const auto traces = ingested(c, d);
    std::map<std::string, const NormalizedTrace*> by_id;
    for (const auto& t : traces) by_id[t.trace_id] = &t;
    ItemSet train, test;
    std::istringstream index(read_file(c.stage_dir("encode") / d.spec.dataset_id / "split.csv"));
    std::string line;
    while (std::getline(index, line)) {
      const auto a = line.find(','), b = line.rfind(',');
      const auto id = line.substr(0, a);
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw StageError("encode split lists unknown trace '" + id + "'", 1);
      (line.substr(b + 1) == "train" ? train : test).push_back(make_item(*it->second, c.cfg.enhance));
    }
    const auto out = c.dir / d.spec.dataset_id;
    fs::create_directories(out / "preview");
    write_items(out / "train.items", train);
    write_items(out / "test.items", test);
    std::map<int, int> shown;
    for (const auto& item : train)
      if (shown[item.label]++ < 2)
        write_png(out / "preview" / ("class" + std::to_string(item.label) + "_" +
                                     std::to_string(shown[item.label] - 1) + ".png"),
                  item.image);
    c.log("enhance: " + d.spec.dataset_id + " " + std::to_string(c.cfg.enhance.resolution) + "x" +
          std::to_string(c.cfg.enhance.resolution));
  }
}

PreparedDataset prepared(const Ctx& c, const DatasetEntry& d) {
  PreparedDataset ds;
  ds.dataset_id = d.spec.dataset_id;
  ds.traffic_type = d.traffic_type;
  ds.platform = d.platform;
  ds.enhance = c.cfg.enhance;
  const auto dir = c.stage_dir("enhance") / d.spec.dataset_id;
  ds.train = read_items(dir / "train.items");
  ds.test = read_items(dir / "test.items");
  return ds;
}

// ---- train-dm -------------------------------------------------------------

void save_generators(const GeneratorSet& gens, const fs::path& dir, const std::string& stem) {
  for (std::size_t k = 0; k < gens.models.size(); ++k)
    gens.models[k].save(dir / (stem + "_" + std::to_string(k) + ".ckpt"));
}

GeneratorSet load_generators(const fs::path& dir, const std::string& stem) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.starts_with(stem + "_") && name.ends_with(".ckpt")) files.push_back(e.path());
    }
  std::sort(files.begin(), files.end());
  GeneratorSet gens;
  for (const auto& f : files) gens.models.push_back(DiffusionModel::load(f));
  return gens;
}

void write_losses(const fs::path& path, const GeneratorSet& gens) {
  std::ostringstream out;
  out.precision(9);
  out << "model,step,loss\n";
  for (std::size_t k = 0; k < gens.models.size(); ++k)
    for (std::size_t s = 0; s < gens.models[k].loss_curve.size(); ++s)
      out << k << ',' << s + 1 << ',' << gens.models[k].loss_curve[s] << '\n';
  write_file_atomic(path, out.str());
}

void do_train_dm(const Ctx& c) {
  for (const auto& d : c.cfg.datasets) {
    const auto ds = prepared(c, d);
    const auto out = c.dir / d.spec.dataset_id;
    fs::create_directories(out);
    std::vector<PixelImage> images;
    for (const auto& item : ds.train) images.push_back(item.image);
    const auto progress = [&](const std::string& tag, int total) {
      return [&c, tag, total](int step, double loss) {
        if (step % 100 == 0 || step == total)
          c.log("train-dm: " + tag + " step " + std::to_string(step) + "/" + std::to_string(total) + " loss " +
                std::to_string(loss));
      };
    };
    auto cfg2d = c.cfg.diffusion;
    if (cfg2d.checkpoint_every > 0) cfg2d.checkpoint_path = out / "partial.ckpt.part";
    auto gens = fit_generators(images, cfg2d, ds.dataset_id, derive_seed(c.seed, ds.dataset_id + "/2d"),
                               progress(ds.dataset_id, cfg2d.train_steps));
    save_generators(gens, out, "model2d");
    write_losses(out / "loss2d.csv", gens);
    if (c.cfg.diffusion_1d) {
      auto cfg1d = *c.cfg.diffusion_1d;
      if (cfg1d.checkpoint_every > 0) cfg1d.checkpoint_path = out / "partial1d.ckpt.part";
      auto gens1d = fit_generators(trace_images(ds.train), cfg1d, ds.dataset_id,
                                   derive_seed(c.seed, ds.dataset_id + "/1d"),
                                   progress(ds.dataset_id + " (1D)", cfg1d.train_steps));
      save_generators(gens1d, out, "model1d");
      write_losses(out / "loss1d.csv", gens1d);
    }
    for (const auto& e : fs::directory_iterator(out))
      if (e.path().extension() == ".part") fs::remove(e.path());
  }
}

// ---- sample ---------------------------------------------------------------

void do_sample(const Ctx& c) {
  const int count = c.opt.sample_count.value_or(c.cfg.sample_count);
  if (count < 0) throw StageError("sample count must be non-negative", 2);
  for (const auto& d : c.cfg.datasets) {
    const auto ds = prepared(c, d);
    const auto models = c.stage_dir("train-dm") / d.spec.dataset_id;
    const auto out = c.dir / d.spec.dataset_id;
    fs::create_directories(out);
    auto gens = load_generators(models, "model2d");
    if (gens.models.empty()) throw StageError("no 2D model for dataset '" + d.spec.dataset_id + "' in train-dm", 3);
    const auto images = gens.sample_all(count, derive_seed(c.seed, ds.dataset_id + "/2d"));
    const auto pool = synthetic_items(images, "2d");
    write_items(out / "synth2d.items", pool);
    std::map<int, int> shown;
    for (const auto& item : pool)
      if (shown[item.label]++ < 2) {
        fs::create_directories(out / "preview");
        write_png(out / "preview" / ("class" + std::to_string(item.label) + "_" +
                                     std::to_string(shown[item.label] - 1) + ".png"),
                  item.image);
      }
    auto gens1d = load_generators(models, "model1d");
    if (!gens1d.models.empty()) {
      const auto series = gens1d.sample_all(count, derive_seed(c.seed, ds.dataset_id + "/1d"));
      write_items(out / "synth1d.items", items_from_series(series, c.cfg.enhance));
    }
    c.log("sample: " + ds.dataset_id + " " + std::to_string(count) + " per class");
  }
}

ItemSet pool_of(const Ctx& c, const std::string& dataset_id, const std::string& name) {
  const auto p = c.stage_dir("sample") / dataset_id / name;
  return fs::exists(p) ? read_items(p) : ItemSet{};
}

// ---- fid ------------------------------------------------------------------

std::vector<PixelImage> images_by_class(const ItemSet& items, int label) {
  std::vector<PixelImage> out;
  for (const auto& item : items)
    if (item.label == label) out.push_back(item.image);
  return out;
}

void do_fid(const Ctx& c) {
  std::ostringstream fid_csv, summary, cross, hist, overlap;
  for (auto* s : {&fid_csv, &summary, &cross, &hist, &overlap}) s->precision(10);
  fid_csv << "dataset,class,fid\n";
  summary << "dataset,embedder,n,mean,std\n";
  cross << "dataset,synthetic_class,original_class,fid\n";
  hist << "dataset,bin,bin_low,original,synthetic\n";
  overlap << "dataset,bins,overlap\n";
  for (const auto& d : c.cfg.datasets) {
    const auto ds = prepared(c, d);
    const auto pool = pool_of(c, ds.dataset_id, "synth2d.items");
    if (pool.empty()) {
      c.log("fid: " + ds.dataset_id + " has no synthetic samples; skipped");
      continue;
    }
    std::map<int, int> per_class;
    for (const auto& item : pool) ++per_class[item.label];
    int n = c.cfg.fid_n;
    for (const auto& [_, k] : per_class) n = std::min(n, k);
    if (n < 2) throw StageError("fid needs at least 2 synthetic images per class", 1);
    std::vector<PixelImage> orig, synth;
    for (const auto& item : ds.train) orig.push_back(item.image);
    for (const auto& item : pool) synth.push_back(item.image);
    const auto report =
        fid_per_class(orig, synth, static_cast<std::size_t>(n), c.cfg.embedder, derive_seed(c.seed, ds.dataset_id));
    for (const auto& pc : report.per_class) fid_csv << ds.dataset_id << ',' << pc.class_label << ',' << pc.fid << '\n';
    summary << ds.dataset_id << ',' << c.cfg.embedder << ',' << n << ',' << report.mean << ',' << report.stddev << '\n';

    const auto classes = ds.classes();
    std::map<int, GaussianStats> orig_stats, synth_stats;
    for (int label : classes) {
      orig_stats[label] = gaussian_stats(embed_images(images_by_class(ds.train, label), c.cfg.embedder));
      synth_stats[label] = gaussian_stats(embed_images(images_by_class(pool, label), c.cfg.embedder));
    }
    for (int s : classes)
      for (int o : classes)
        cross << ds.dataset_id << ',' << s << ',' << o << ',' << frechet_distance(synth_stats[s], orig_stats[o])
              << '\n';

    const auto ho = pixel_histogram(orig, c.cfg.histogram_bins);
    const auto hs = pixel_histogram(synth, c.cfg.histogram_bins);
    for (std::size_t b = 0; b < ho.size(); ++b)
      hist << ds.dataset_id << ',' << b << ',' << static_cast<double>(b) / static_cast<double>(ho.size()) << ','
           << ho[b] << ',' << hs[b] << '\n';
    overlap << ds.dataset_id << ',' << c.cfg.histogram_bins << ','
            << histogram_compare(orig, synth, c.cfg.histogram_bins) << '\n';
    c.log("fid: " + ds.dataset_id + " mean " + std::to_string(report.mean));
  }
  write_file_atomic(c.dir / "fid.csv", fid_csv.str());
  write_file_atomic(c.dir / "fid_summary.csv", summary.str());
  write_file_atomic(c.dir / "fid_cross.csv", cross.str());
  write_file_atomic(c.dir / "histograms.csv", hist.str());
  write_file_atomic(c.dir / "histogram_overlap.csv", overlap.str());
}

// ---- eval -----------------------------------------------------------------

std::vector<Scenario> scenarios_for(const ItemSet& pool, int synth_count) {
  std::map<int, int> per_class;
  for (const auto& item : pool) ++per_class[item.label];
  const bool enough = !pool.empty() && std::all_of(per_class.begin(), per_class.end(),
                                                   [&](const auto& kv) { return kv.second >= synth_count; });
  if (enough && synth_count > 0) return {kAllScenarios.begin(), kAllScenarios.end()};
  return {Scenario::kOriginal};
}

void do_eval(const Ctx& c) {
  const auto protocols = effective_protocols(c.cfg, c.opt);
  std::vector<PreparedDataset> datasets;
  for (const auto& d : c.cfg.datasets) datasets.push_back(prepared(c, d));
  const auto& h = c.cfg.harness;
  const int sc = c.cfg.synth_count;

  for (const auto& protocol : protocols) {
    EvalReport report;
    // One classifier seed across protocols keeps rows comparable, e.g. the
    // full-length realtime row equals the hierarchical L3 row.
    const auto pseed = c.seed;
    c.log("eval: " + protocol);
    if (protocol == "hierarchical") {
      std::map<std::string, ItemSet> pools;
      std::vector<Scenario> scenarios{kAllScenarios.begin(), kAllScenarios.end()};
      for (const auto& ds : datasets) {
        pools[ds.dataset_id] = pool_of(c, ds.dataset_id, "synth2d.items");
        if (scenarios_for(pools[ds.dataset_id], sc).size() == 1) scenarios = {Scenario::kOriginal};
      }
      report = hierarchical_eval(datasets, pools, sc, scenarios, pseed, h);
    } else if (protocol == "limited") {
      for (const auto& ds : datasets)
        report.append(limited_data_sweep(ds, c.cfg.limited_sizes, sc, diffusion_source_2d(c.cfg.diffusion),
                                         derive_seed(pseed, ds.dataset_id), h));
    } else if (protocol == "anomaly") {
      bool any = false;
      for (const auto& ds : datasets) {
        AnomalySetup setup;
        if (!c.cfg.anomaly_classes.empty()) {
          setup.anomaly_classes = c.cfg.anomaly_classes;
          setup.legitimate_classes = c.cfg.legitimate_classes;
        } else {
          const int k = static_cast<int>(ds.classes().size());
          if (k < 3) continue;
          setup = choose_anomaly_setup(ds, 2, std::min(5, k - 2), derive_seed(pseed, ds.dataset_id));
        }
        setup.anomaly_train_count = c.cfg.anomaly_train_count;
        setup.prefix_length = c.cfg.anomaly_prefix;
        any = true;
        const auto dseed = derive_seed(pseed, ds.dataset_id);
        for (Scenario s : kAllScenarios)
          report.rows.push_back(anomaly_case1(ds, setup, s, sc, diffusion_source_2d(c.cfg.diffusion), dseed, h));
        const auto u = anomaly_case2_uncertainty(ds, setup, c.cfg.ensemble, dseed, h);
        u.write_csv(c.dir / ("uncertainty_" + ds.dataset_id + ".csv"));
        c.log("eval: anomaly " + ds.dataset_id + " mean entropy legitimate " + std::to_string(u.mean_legitimate()) +
              " anomaly " + std::to_string(u.mean_anomaly()));
      }
      if (!any) throw StageError("anomaly protocol needs a dataset with at least 3 classes", 1);
    } else if (protocol == "realtime") {
      for (const auto& ds : datasets) {
        const auto n = ds.trace_length();
        auto prefixes = c.cfg.realtime_prefixes;
        if (prefixes.empty()) prefixes = {std::max<std::size_t>(1, n / 4), std::max<std::size_t>(1, n / 2), n};
        const auto pool = pool_of(c, ds.dataset_id, "synth2d.items");
        report.append(realtime_eval(ds, prefixes, scenarios_for(pool, sc), pool, sc, pseed, h));
      }
    } else if (protocol == "1d2d") {
      for (const auto& ds : datasets) {
        const auto pool1d = pool_of(c, ds.dataset_id, "synth1d.items");
        if (pool1d.empty())
          throw StageError("1d2d protocol needs samples from a 1D model; configure diffusion_1d and re-run train-dm "
                           "and sample",
                           1);
        report.append(compare_1d_2d(ds, pool_of(c, ds.dataset_id, "synth2d.items"), pool1d, sc, pseed, h));
      }
    } else if (protocol == "synthsweep") {
      for (const auto& ds : datasets) {
        const auto pool = pool_of(c, ds.dataset_id, "synth2d.items");
        report.append(synth_count_sweep(ds, pool, c.cfg.synth_counts, pseed, h));
      }
    }
    write_file_atomic(c.dir / (protocol + ".csv"), report.to_csv());
  }
}

// ---- report ---------------------------------------------------------------

std::string fmt(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << v;
  return s.str();
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(std::move(f));
  }
  return rows;
}

void do_report(const Ctx& c) {
  const auto eval_dir = c.stage_dir("eval");
  const auto read = [&](const std::string& protocol) -> std::optional<EvalReport> {
    const auto p = eval_dir / (protocol + ".csv");
    if (!fs::exists(p)) return std::nullopt;
    return EvalReport::read_csv(p);
  };
  fs::create_directories(c.dir / "figures");
  if (auto r = read("hierarchical")) write_file_atomic(c.dir / "table2.csv", hierarchical_table(*r));
  if (auto r = read("1d2d")) {
    write_file_atomic(c.dir / "table3.csv", one_d_two_d_table(*r));
    write_file_atomic(c.dir / "table4.csv", fraction_table(*r));
  }
  if (auto r = read("limited")) {
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& row : r->rows) series[row.dataset + " " + row.scenario].emplace_back(row.train_size, row.accuracy);
    write_file_atomic(c.dir / "figures" / "accuracy_vs_size.svg",
                      svg::line_chart("Accuracy vs original traces per class", "traces per class", "accuracy (%)",
                                      series));
    write_file_atomic(c.dir / "limited.csv", r->to_csv());
    write_file_atomic(c.dir / "limited_gain.csv", limited_gain_table(*r));
  }
  if (auto r = read("realtime")) {
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& row : r->rows)
      series[row.dataset + " " + row.scenario].emplace_back(row.crop_length, row.accuracy);
    write_file_atomic(c.dir / "figures" / "accuracy_vs_prefix.svg",
                      svg::line_chart("Accuracy vs trace prefix", "prefix length", "accuracy (%)", series));
    write_file_atomic(c.dir / "realtime.csv", r->to_csv());
  }
  if (auto r = read("synthsweep")) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& row : r->rows) {
      labels.push_back(row.dataset + " " + row.variant);
      values.push_back(row.accuracy);
    }
    write_file_atomic(c.dir / "figures" / "synth_count_sweep.svg",
                      svg::bar_chart("Accuracy vs synthetic count", "accuracy (%)", labels, values));
    write_file_atomic(c.dir / "synthsweep.csv", r->to_csv());
  }
  if (auto r = read("anomaly")) {
    write_file_atomic(c.dir / "anomaly.csv", r->to_csv());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(eval_dir))
      if (e.path().filename().string().starts_with("uncertainty_")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::map<std::string, std::vector<double>> pops;
      for (const auto& row : read_csv_rows(f)) pops[row.at(1)].push_back(std::stod(row.at(2)));
      const auto name = f.stem().string();
      write_file_atomic(c.dir / "figures" / (name + ".svg"),
                        svg::histogram_overlay("Predictive entropy", "entropy (nats)", pops, 20));
    }
  }
  const auto fid_dir = c.stage_dir("fid");
  if (fs::exists(fid_dir / "fid.csv")) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& row : read_csv_rows(fid_dir / "fid.csv")) {
      labels.push_back(row.at(0) + " c" + row.at(1));
      values.push_back(std::stod(row.at(2)));
    }
    write_file_atomic(c.dir / "figures" / "fid_by_class.svg", svg::bar_chart("FID by class", "FID", labels, values));
    write_file_atomic(c.dir / "fid_summary.csv", read_file(fid_dir / "fid_summary.csv"));
    std::map<std::string, std::map<std::string, std::vector<double>>> hists;
    for (const auto& row : read_csv_rows(fid_dir / "histograms.csv")) {
      hists[row.at(0)]["original"].push_back(std::stod(row.at(3)));
      hists[row.at(0)]["synthetic"].push_back(std::stod(row.at(4)));
    }
    for (const auto& [ds, series] : hists)
      write_file_atomic(c.dir / "figures" / ("histogram_" + ds + ".svg"),
                        svg::binned_overlay("Pixel histogram " + ds, "pixel value", series));
  }
}

std::string stage_key(const RunConfig& cfg, std::string_view stage, const std::vector<std::string>& deps,
                      const fs::path& root, const StageOptions& opt) {
  std::ostringstream k;
  k << "stage=" << stage << "\nseed=" << cfg.seed << "\nsection=" << cfg.stage_section(stage) << '\n';
  if (stage == "sample") k << "count=" << opt.sample_count.value_or(cfg.sample_count) << '\n';
  if (stage == "eval")
    for (const auto& p : effective_protocols(cfg, opt)) k << "protocol=" << p << '\n';
  for (const auto& d : deps) k << "input=" << d << ':' << sha256_file(root / d / "manifest.json") << '\n';
  return sha256_hex(k.str());
}

void write_run_manifest(const RunConfig& cfg, const fs::path& root) {
  OJson j;
  auto canonical = OJson::parse(cfg.to_json());
  canonical.erase("artifact_root");
  j["config_sha256"] = sha256_hex(canonical.dump());
  j["seed"] = cfg.seed;
  auto& stages = j["stages"] = OJson::object();
  for (auto s : kStages) {
    const auto m = root / std::string(s) / "manifest.json";
    if (fs::exists(m)) stages[std::string(s)] = sha256_file(m);
  }
  write_file_atomic(root / "run_manifest.json", j.dump(2) + "\n");
}

}  // namespace

StageOutcome run_stage(const RunConfig& cfg, std::string_view stage, const fs::path& root, const StageOptions& opt) {
  if (std::find(kStages.begin(), kStages.end(), stage) == kStages.end())
    throw StageError("unknown stage '" + std::string(stage) + "'", 2);
  const auto deps = upstream_of(stage, cfg, opt);
  for (const auto& d : deps) {
    const auto dir = root / d;
    if (!fs::exists(dir / "manifest.json"))
      throw StageError("stage '" + std::string(stage) + "' requires stage '" + d + "' (missing " +
                           (dir / "manifest.json").string() + "); run `trafficdiff " + d + "` first",
                       3);
    if (!load_manifest(dir).verify(dir))
      throw StageError("artifacts of stage '" + d + "' are incomplete or modified; re-run `trafficdiff " + d +
                           " --force`",
                       3);
  }

  StageOutcome outcome;
  outcome.stage = std::string(stage);
  outcome.dir = root / std::string(stage);
  const auto key = stage_key(cfg, stage, deps, root, opt);
  const auto manifest_path = outcome.dir / "manifest.json";
  if (!opt.force && fs::exists(manifest_path)) {
    const auto existing = load_manifest(outcome.dir);
    if (existing.stage_key == key && existing.verify(outcome.dir)) {
      outcome.skipped = true;
      outcome.manifest_sha256 = sha256_file(manifest_path);
      return outcome;
    }
  }

  fs::remove_all(outcome.dir);
  fs::create_directories(outcome.dir);
  const Ctx ctx{cfg, root, outcome.dir, derive_seed(cfg.seed, stage), opt};
  if (stage == "ingest") do_ingest(ctx);
  else if (stage == "encode") do_encode(ctx);
  else if (stage == "enhance") do_enhance(ctx);
  else if (stage == "train-dm") do_train_dm(ctx);
  else if (stage == "sample") do_sample(ctx);
  else if (stage == "fid") do_fid(ctx);
  else if (stage == "eval") do_eval(ctx);
  else if (stage == "report") do_report(ctx);

  StageManifest m;
  m.stage = std::string(stage);
  m.stage_key = key;
  m.seed = ctx.seed;
  for (const auto& d : deps) m.inputs.emplace_back(d, sha256_file(root / d / "manifest.json"));
  m.files = StageManifest::scan(outcome.dir);
  write_file_atomic(manifest_path, m.to_json());
  write_run_manifest(cfg, root);
  outcome.manifest_sha256 = sha256_file(manifest_path);
  return outcome;
}

std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, const fs::path& root, const StageOptions& opt) {
  std::vector<StageOutcome> out;
  for (auto s : kStages) out.push_back(run_stage(cfg, s, root, opt));
  return out;
}

namespace {

std::string lookup(const EvalReport& r, const std::function<bool(const EvalRow&)>& pred) {
  for (const auto& row : r.rows)
    if (pred(row)) return fmt(row.accuracy);
  return "";
}

}  // namespace

std::string hierarchical_table(const EvalReport& report) {
  std::ostringstream out;
  out << "layer,data,original,synth,ori+synth\n";
  std::vector<std::pair<std::string, std::string>> keys;
  for (const char* level : {"L1", "L2", "L3"})
    for (const auto& row : report.rows)
      if (row.protocol == "hierarchical" && row.level == level) {
        std::pair<std::string, std::string> k{row.level, row.dataset};
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
      }
  for (const auto& [level, data] : keys) {
    out << level << ',' << data;
    for (const char* sc : {"original", "synth", "ori+synth"})
      out << ',' << lookup(report, [&](const EvalRow& r) {
        return r.protocol == "hierarchical" && r.level == level && r.dataset == data && r.scenario == sc;
      });
    out << '\n';
  }
  return out.str();
}

std::string one_d_two_d_table(const EvalReport& report) {
  std::ostringstream out;
  out << "data,original,synth-1D,synth-2D,ori+synth-1D,ori+synth-2D\n";
  std::vector<std::string> datasets;
  for (const auto& row : report.rows)
    if (row.protocol == "1d2d" && std::find(datasets.begin(), datasets.end(), row.dataset) == datasets.end())
      datasets.push_back(row.dataset);
  for (const auto& ds : datasets) {
    out << ds;
    for (const char* v : {"original", "synth-1D", "synth-2D", "ori+synth-1D", "ori+synth-2D"})
      out << ',' << lookup(report, [&](const EvalRow& r) {
        return r.protocol == "1d2d" && r.dataset == ds && r.variant == v;
      });
    out << '\n';
  }
  return out.str();
}

std::string fraction_table(const EvalReport& report) {
  std::ostringstream out;
  out << "data,80%-1D,80%-2D,40%-1D,40%-2D,20%-1D,20%-2D\n";
  std::vector<std::string> datasets;
  for (const auto& row : report.rows)
    if (row.protocol == "1d2d-fraction" &&
        std::find(datasets.begin(), datasets.end(), row.dataset) == datasets.end())
      datasets.push_back(row.dataset);
  for (const auto& ds : datasets) {
    out << ds;
    for (const char* v : {"80%-1D", "80%-2D", "40%-1D", "40%-2D", "20%-1D", "20%-2D"})
      out << ',' << lookup(report, [&](const EvalRow& r) {
        return r.protocol == "1d2d-fraction" && r.dataset == ds && r.variant == v;
      });
    out << '\n';
  }
  return out.str();
}

std::string limited_gain_table(const EvalReport& report) {
  using Key = std::pair<std::string, std::string>;
  std::vector<Key> groups;
  std::map<Key, std::map<int, std::map<std::string, double>>> acc;
  for (const auto& row : report.rows) {
    if (row.protocol != "limited") continue;
    const Key k{row.dataset, row.classifier};
    if (std::find(groups.begin(), groups.end(), k) == groups.end()) groups.push_back(k);
    acc[k][row.train_size][row.scenario] = row.accuracy;
  }
  std::ostringstream out;
  out << "data,classifier,train_size,gain\n";
  for (const auto& k : groups) {
    double sum = 0.0;
    int n = 0;
    for (const auto& [size, by_scenario] : acc[k]) {
      const auto o = by_scenario.find("original");
      const auto os = by_scenario.find("ori+synth");
      if (o == by_scenario.end() || os == by_scenario.end()) continue;
      const double gain = os->second - o->second;
      out << k.first << ',' << k.second << ',' << size << ',' << fmt(gain) << '\n';
      sum += gain;
      ++n;
    }
    if (n > 0) out << k.first << ',' << k.second << ",mean," << fmt(sum / n) << '\n';
  }
  return out.str();
}

}  // namespace trafficdiff
