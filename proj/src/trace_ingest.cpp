#include "trafficdiff/trace_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace trafficdiff {

namespace fs = std::filesystem;

void RawTrace::validate() const {
  if (values.empty()) throw std::invalid_argument("trace " + trace_id + ": values are empty");
  if (timestamps.empty()) return;
  if (timestamps.size() != values.size())
    throw std::invalid_argument("trace " + trace_id + ": timestamp/value length mismatch");
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (!(timestamps[i] >= 0.0))
      throw std::invalid_argument("trace " + trace_id + ": negative timestamp");
    if (i > 0 && timestamps[i] < timestamps[i - 1])
      throw std::invalid_argument("trace " + trace_id + ": timestamps decrease");
  }
}

void DatasetSpec::validate() const {
  if (target_length < 2) throw std::invalid_argument("dataset target_length must be >= 2");
  if (num_classes < 2) throw std::invalid_argument("dataset num_classes must be >= 2");
  if (traces_per_class < 1) throw std::invalid_argument("dataset traces_per_class must be >= 1");
  if (bin_width && !(*bin_width > 0.0)) throw std::invalid_argument("dataset bin_width must be > 0");
}

RawTrace bin_trace(const RawTrace& raw, double bin_width) {
  if (!raw.has_timestamps()) throw std::invalid_argument("unbinnable trace: no timestamps");
  if (!(bin_width > 0.0)) throw std::invalid_argument("bin_width must be > 0");
  raw.validate();

  RawTrace out;
  out.class_label = raw.class_label;
  out.dataset_id = raw.dataset_id;
  out.trace_id = raw.trace_id;
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    const auto bin = static_cast<std::size_t>(std::floor(raw.timestamps[i] / bin_width));
    if (bin >= out.values.size()) out.values.resize(bin + 1, 0.0);
    out.values[bin] += raw.values[i];
  }
  out.timestamps.resize(out.values.size());
  for (std::size_t k = 0; k < out.timestamps.size(); ++k)
    out.timestamps[k] = static_cast<double>(k) * bin_width;
  return out;
}

std::vector<double> fix_length(std::span<const double> values, std::size_t target) {
  if (target < 1) throw std::invalid_argument("fix_length target must be >= 1");
  std::vector<double> out(values.begin(), values.begin() + std::min(values.size(), target));
  out.resize(target, 0.0);
  return out;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("cannot normalize an empty sequence");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::vector<double> out(values.size(), 0.0);
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = std::clamp((values[i] - lo) / range, 0.0, 1.0);
  return out;
}

NormalizedTrace prepare_trace(const RawTrace& raw, const DatasetSpec& spec) {
  raw.validate();
  std::vector<double> values;
  if (spec.bin_width && raw.has_timestamps()) {
    values = bin_trace(raw, *spec.bin_width).values;
  } else {
    values = raw.values;
  }
  NormalizedTrace out;
  out.samples = minmax_normalize(fix_length(values, spec.target_length));
  out.class_label = raw.class_label;
  out.dataset_id = raw.dataset_id;
  out.trace_id = raw.trace_id;
  return out;
}

DatasetSplit split_dataset(std::span<const NormalizedTrace> traces, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < traces.size(); ++i) by_class[traces[i].class_label].push_back(i);

  std::vector<char> is_train(traces.size(), 0);
  for (const auto& [label, indices] : by_class) {
    if (indices.size() < 2)
      throw std::invalid_argument("class " + std::to_string(label) + " has fewer than 2 traces");
    const auto n_train =
        static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(indices.size())));
    for (std::size_t k = 0; k < n_train; ++k) is_train[indices[k]] = 1;
  }
  DatasetSplit split;
  for (std::size_t i = 0; i < traces.size(); ++i)
    (is_train[i] ? split.train : split.test).push_back(traces[i]);
  return split;
}

namespace {

std::vector<double> toy_sinusoid(std::size_t n, int label, const ToyFamily& family, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double cycles = family.base_cycles + label * family.cycle_step + family.cycle_jitter * gauss(rng);
  const double phase = 0.7 * label + family.phase_jitter * gauss(rng);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n);
    v[i] = 1.0 + 0.6 * std::sin(2.0 * std::numbers::pi * cycles * t + phase) + family.noise * gauss(rng);
  }
  return v;
}

std::vector<double> toy_random_walk(std::size_t n, const ToyFamily& family, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(n);
  double level = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    level = std::abs(level + 0.12 * gauss(rng));
    v[i] = level + family.noise * gauss(rng);
  }
  return v;
}

}  // namespace

std::vector<RawTrace> gen_toy_dataset(const DatasetSpec& spec, std::uint64_t seed, const ToyFamily& family) {
  spec.validate();
  constexpr double kLevel = 1000.0;
  constexpr int kSubSamplesPerBin = 4;

  std::mt19937_64 rng(seed);
  std::poisson_distribution<int> burst_count(family.burst_rate);
  std::exponential_distribution<double> burst_size(1.0);

  std::vector<RawTrace> traces;
  traces.reserve(static_cast<std::size_t>(spec.num_classes * spec.traces_per_class));
  for (int c = 0; c < spec.num_classes; ++c) {
    const bool walk = std::find(family.random_walk_classes.begin(), family.random_walk_classes.end(), c) !=
                      family.random_walk_classes.end();
    for (int k = 0; k < spec.traces_per_class; ++k) {
      const std::size_t n = spec.target_length;
      auto shape = walk ? toy_random_walk(n, family, rng) : toy_sinusoid(n, c, family, rng);
      const int bursts = burst_count(rng);
      std::uniform_int_distribution<std::size_t> where(0, n - 1);
      for (int b = 0; b < bursts; ++b) {
        const std::size_t at = where(rng);
        const double size = family.burst_scale * burst_size(rng);
        for (std::size_t j = at; j < std::min(n, at + 3); ++j) shape[j] += size;
      }

      RawTrace trace;
      trace.class_label = c;
      trace.dataset_id = spec.dataset_id;
      trace.trace_id = spec.dataset_id + "/" + std::to_string(c) + "/" + std::to_string(k);
      if (spec.bin_width) {
        const double w = *spec.bin_width;
        for (std::size_t i = 0; i < n; ++i) {
          const double bytes = std::round(std::max(0.0, shape[i]) * kLevel);
          for (int s = 0; s < kSubSamplesPerBin; ++s) {
            trace.timestamps.push_back((static_cast<double>(i) + (s + 0.5) / kSubSamplesPerBin) * w);
            trace.values.push_back(bytes / kSubSamplesPerBin);
          }
        }
      } else {
        trace.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) trace.values[i] = std::round(std::max(0.0, shape[i]) * kLevel);
      }
      traces.push_back(std::move(trace));
    }
  }
  return traces;
}

RawTrace read_trace_csv(const fs::path& path, const std::string& dataset_id, int class_label) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  RawTrace trace;
  trace.dataset_id = dataset_id;
  trace.class_label = class_label;
  trace.trace_id = dataset_id + "/" + std::to_string(class_label) + "/" + path.stem().string();

  std::string line;
  std::size_t line_no = 0;
  int columns = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    std::vector<double> parsed;
    bool numeric = true;
    for (const auto& cell : cells) {
      try {
        std::size_t used = 0;
        parsed.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (line_no == 1 && columns < 0) continue;  // header
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell");
    }
    if (parsed.empty() || parsed.size() > 3)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 1 to 3 columns");
    if (columns < 0) columns = static_cast<int>(parsed.size());
    if (static_cast<int>(parsed.size()) != columns)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": inconsistent column count");
    if (columns == 3) {
      trace.timestamps.push_back(parsed[0]);
      trace.values.push_back(parsed[1] * parsed[2]);
    } else if (columns == 2) {
      trace.timestamps.push_back(parsed[0]);
      trace.values.push_back(parsed[1]);
    } else {
      trace.values.push_back(parsed[0]);
    }
  }
  if (trace.values.empty()) throw std::runtime_error(path.string() + ": no samples");
  try {
    trace.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return trace;
}

void write_trace_csv(const fs::path& path, const RawTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << (trace.has_timestamps() ? "timestamp,value\n" : "value\n");
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    if (trace.has_timestamps()) out << trace.timestamps[i] << ',';
    out << trace.values[i] << '\n';
  }
}

CsvError::CsvError(std::string message, std::vector<std::string> files_)
    : std::runtime_error(std::move(message)), files(std::move(files_)) {}

std::vector<RawTrace> load_dataset_dir(const fs::path& root, const std::string& dataset_id) {
  if (!fs::is_directory(root)) throw std::invalid_argument("input directory not found: " + root.string());

  std::vector<std::pair<int, fs::path>> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    try {
      std::size_t used = 0;
      const int label = std::stoi(name, &used);
      if (used == name.size()) class_dirs.emplace_back(label, entry.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  std::vector<RawTrace> traces;
  std::vector<std::string> errors;
  for (const auto& [label, dir] : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      try {
        traces.push_back(read_trace_csv(file, dataset_id, label));
      } catch (const std::exception& e) {
        errors.emplace_back(e.what());
      }
    }
  }
  if (!errors.empty()) {
    std::string message = "malformed trace files:";
    for (const auto& e : errors) message += "\n  " + e;
    throw CsvError(message, errors);
  }
  return traces;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

DatasetSpec read_dataset_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset manifest " + path.string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(in, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!trim(line).empty()) throw std::runtime_error("dataset manifest: bad line '" + line + "'");
      continue;
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto require = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(std::string("dataset manifest: missing key ") + key);
    return it->second;
  };

  DatasetSpec spec;
  spec.dataset_id = require("dataset_id");
  const auto& bw = require("bin_width");
  if (bw != "none" && !bw.empty()) spec.bin_width = std::stod(bw);
  spec.target_length = static_cast<std::size_t>(std::stoull(require("target_length")));
  spec.num_classes = std::stoi(require("num_classes"));
  if (kv.count("traces_per_class")) spec.traces_per_class = std::stoi(kv["traces_per_class"]);
  spec.validate();
  return spec;
}

void write_dataset_manifest(const fs::path& path, const DatasetSpec& spec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "dataset_id = " << spec.dataset_id << '\n';
  out << "bin_width = ";
  if (spec.bin_width) out << *spec.bin_width; else out << "none";
  out << '\n';
  out << "target_length = " << spec.target_length << '\n';
  out << "num_classes = " << spec.num_classes << '\n';
  out << "traces_per_class = " << spec.traces_per_class << '\n';
}

}  // namespace trafficdiff
