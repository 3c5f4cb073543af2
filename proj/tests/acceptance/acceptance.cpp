// Acceptance suite: one PASS/FAIL line per criterion.
//
//   trafficdiff_acceptance [--work DIR] [criterion numbers...]
//
// Without numbers every criterion runs. Pipeline-backed criteria write their
// artifacts under DIR (default: a directory in the system temp location).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trafficdiff/diffusion.hpp"
#include "trafficdiff/fidelity.hpp"
#include "trafficdiff/gasf.hpp"
#include "trafficdiff/harness.hpp"
#include "trafficdiff/nn/unet.hpp"
#include "trafficdiff/pipeline.hpp"
#include "trafficdiff/storage.hpp"

using namespace trafficdiff;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes.
constexpr double kRoundTripTol = 1e-9;
constexpr double kRoundTripSeconds = 10.0;
constexpr double kOracleTol = 1e-12;
constexpr double kFidClosedFormTol = 1e-9;
constexpr double kSelfFidTol = 1e-6;
constexpr double kMarginalVarianceRelTol = 0.10;
constexpr double kZeroLossTol = 1e-6;
constexpr double kGradRelTol = 1e-3;
constexpr std::size_t kGradMaxParams = 5000;
constexpr double kSynthOnlyMinAccuracy = 90.0;
constexpr double kOriSynthSlack = 2.0;
constexpr double kEntropySlack = 1e-12;

struct Result {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path source_dir;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::vector<double> unit_trace(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (line.back() == ',') row.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

RunConfig load_config(const Context& ctx, const std::string& name) {
  return RunConfig::load(ctx.source_dir / "configs" / name);
}

Result gasf_round_trip(const Context&) {
  std::mt19937_64 rng(1);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto x = unit_trace(rng, std::uniform_int_distribution<std::size_t>(32, 128)(rng));
    const auto back = gasf_decode(gasf_encode(x));
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < kRoundTripTol && secs < kRoundTripSeconds,
          "max error " + fmt(worst) + " over 1000 traces in " + fmt(secs, 3) + " s"};
}

Result gasf_oracle(const Context&) {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  bool symmetric = true, bounded = true;
  for (int k = 0; k < 100; ++k) {
    const auto x = unit_trace(rng, std::uniform_int_distribution<std::size_t>(1, 128)(rng));
    const auto g = gasf_encode(x);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j) {
        worst = std::max(worst, std::abs(g(i, j) - std::cos(std::acos(x[i]) + std::acos(x[j]))));
        symmetric &= g(i, j) == g(j, i);
        bounded &= g(i, j) >= -1.0 && g(i, j) <= 1.0;
      }
  }
  return {worst <= kOracleTol && symmetric && bounded,
          "max deviation " + fmt(worst) + ", symmetric " + (symmetric ? "yes" : "no") + ", in [-1,1] " +
              (bounded ? "yes" : "no")};
}

Result prefix_consistency(const Context&) {
  std::mt19937_64 rng(3);
  int mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const auto x = unit_trace(rng, std::uniform_int_distribution<std::size_t>(1, 128)(rng));
    const auto m = std::uniform_int_distribution<std::size_t>(1, x.size())(rng);
    const auto a = crop_prefix(gasf_encode(x), m);
    const auto b = gasf_encode(std::span<const double>(x).first(m));
    if (!std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end())) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 100 crops differ from direct prefix encoding"};
}

GaussianStats scalar_stats(double mean, double var) {
  GaussianStats s;
  s.mean = Eigen::VectorXd::Constant(1, mean);
  s.covariance = Eigen::MatrixXd::Constant(1, 1, var);
  s.count = 2;
  return s;
}

Result fid_closed_form(const Context&) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> mu(-5.0, 5.0), sd(0.0, 3.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double ma = mu(rng), mb = mu(rng), sa = sd(rng), sb = sd(rng);
    const double expect = (ma - mb) * (ma - mb) + sa * sa + sb * sb - 2 * sa * sb;
    worst = std::max(worst, std::abs(frechet_distance(scalar_stats(ma, sa * sa), scalar_stats(mb, sb * sb)) - expect));
  }
  double self = 0.0;
  for (int k = 0; k < 10; ++k) {
    std::vector<std::vector<double>> v(20, std::vector<double>(8));
    std::normal_distribution<double> g;
    for (auto& row : v)
      for (double& x : row) x = g(rng);
    const auto s = gaussian_stats(v);
    self = std::max(self, std::abs(frechet_distance(s, s)));
  }
  const double d = 3.25;
  const double point = frechet_distance(scalar_stats(0.0, 0.0), scalar_stats(d, 0.0));
  return {worst <= kFidClosedFormTol && self <= kSelfFidTol && point == d * d,
          "1-D max error " + fmt(worst) + ", self-FID max " + fmt(self) + ", point mass " + fmt(point, 17) +
              " (expected " + fmt(d * d, 17) + ")"};
}

Result diffusion_marginals(const Context&) {
  const auto sch = make_schedule();
  std::mt19937_64 rng(5);
  std::normal_distribution<float> g;
  double worst = 0.0;
  for (int t : {10, 250, 500, 1000}) {
    std::vector<float> x0(10000, 0.3f), eps(10000);
    for (float& e : eps) e = g(rng);
    const auto xt = forward_diffuse(x0, t, eps, sch);
    const double m = std::accumulate(xt.begin(), xt.end(), 0.0) / xt.size();
    double var = 0.0;
    for (float v : xt) var += (v - m) * (v - m);
    var /= static_cast<double>(xt.size() - 1);
    const double expect = 1.0 - sch.alpha_bar(t);
    worst = std::max(worst, std::abs(var - expect) / expect);
  }
  nn::ZeroDenoiser<float> zero;
  nn::Tensor<float> x0(8, 1, 16, 16), eps(8, 1, 16, 16);
  for (float& v : x0.data) v = g(rng);
  double sq = 0.0;
  for (float& v : eps.data) v = g(rng), sq += static_cast<double>(v) * v;
  sq /= static_cast<double>(eps.size());
  std::vector<int> steps(8);
  for (int& s : steps) s = std::uniform_int_distribution<int>(1, 1000)(rng);
  const double loss = denoising_loss<float>(zero, x0, steps, eps, {}, sch, true);
  return {worst <= kMarginalVarianceRelTol && std::abs(loss - sq) <= kZeroLossTol,
          "max relative variance error " + fmt(worst) + " (t = 10, 250, 500, 1000), zero-denoiser loss gap " +
              fmt(std::abs(loss - sq))};
}

Result gradient_check(const Context&) {
  nn::UNetConfig cfg;
  cfg.base_channels = 4;
  cfg.channel_mult = {1, 2};
  cfg.time_dim = 8;
  cfg.embed_dim = 8;
  cfg.num_classes = 2;
  nn::UNet<double> net(cfg, 6);
  const auto count = net.parameter_count();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.2);
  auto params = net.parameters();
  // Move off the zero-initialized output layer so every gradient is live.
  for (auto* p : params)
    for (double& v : p->value) v += g(rng);

  nn::Tensor<double> x0(2, 1, 8, 8), eps(2, 1, 8, 8);
  std::normal_distribution<double> unit;
  for (double& v : x0.data) v = unit(rng);
  for (double& v : eps.data) v = unit(rng);
  const std::vector<int> steps{3, 40}, labels{0, 1};
  const auto sch = make_schedule(50);
  const auto loss = [&] { return denoising_loss<double>(net, x0, steps, eps, labels, sch, false); };
  for (auto* p : params) p->zero_grad();
  denoising_loss<double>(net, x0, steps, eps, labels, sch, true);

  std::vector<std::pair<std::size_t, std::size_t>> flat;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) flat.emplace_back(k, i);
  std::shuffle(flat.begin(), flat.end(), rng);
  double worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    auto [k, i] = flat[static_cast<std::size_t>(s)];
    auto& v = params[k]->value[i];
    const double keep = v, h = 1e-5;
    v = keep + h;
    const double up = loss();
    v = keep - h;
    const double down = loss();
    v = keep;
    const double numeric = (up - down) / (2 * h), analytic = params[k]->grad[i];
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
  }
  return {count <= kGradMaxParams && worst <= kGradRelTol,
          std::to_string(count) + " parameters, max relative error " + fmt(worst) + " on 20 sampled parameters"};
}

Result end_to_end(const Context& ctx) {
  auto cfg = load_config(ctx, "toy_e2e.json");
  const auto root = ctx.work / "toy_e2e";
  StageOptions opt;
  opt.log = [](const std::string& msg) { std::cerr << "  [c7] " << msg << '\n'; };
  const auto t0 = std::chrono::steady_clock::now();
  run_pipeline(cfg, root, opt);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

  std::map<std::pair<int, int>, double> cross;
  for (const auto& row : csv_rows(root / "fid" / "fid_cross.csv"))
    if (row.at(0) != "dataset") cross[{std::stoi(row.at(1)), std::stoi(row.at(2))}] = std::stod(row.at(3));
  const bool fid_ok = cross.at({0, 0}) < cross.at({0, 1}) && cross.at({1, 1}) < cross.at({1, 0});

  const auto report = EvalReport::read_csv(root / "eval" / "hierarchical.csv");
  std::map<std::string, double> acc;
  for (const auto& row : report.rows)
    if (row.level == "L3") acc[row.scenario] = row.accuracy;
  const double original = acc.at("original"), synth = acc.at("synth"), both = acc.at("ori+synth");
  const bool synth_ok = synth >= kSynthOnlyMinAccuracy;
  const bool both_ok = both >= original - kOriSynthSlack;

  // Mean synthetic image of each class against the class-mean training images.
  const auto pool = read_items(root / "sample" / "toy" / "synth2d.items");
  const auto train = read_items(root / "enhance" / "toy" / "train.items");
  const auto class_mean = [](const ItemSet& items, int label) {
    std::vector<double> m;
    int n = 0;
    for (const auto& item : items)
      if (item.label == label) {
        m.resize(item.image.pixels.size());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += item.image.pixels[i];
        ++n;
      }
    for (double& v : m) v /= n;
    return m;
  };
  const auto l2 = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  const auto s0 = class_mean(pool, 0), o0 = class_mean(train, 0), o1 = class_mean(train, 1);

  return {fid_ok && synth_ok && both_ok,
          "FID s0/o0 " + fmt(cross.at({0, 0})) + " < s0/o1 " + fmt(cross.at({0, 1})) + ", s1/o1 " +
              fmt(cross.at({1, 1})) + " < s1/o0 " + fmt(cross.at({1, 0})) + "; accuracy original " + fmt(original) +
              " synth " + fmt(synth) + " ori+synth " + fmt(both) + "; class-0 mean sample L2 to o0 " +
              fmt(l2(s0, o0)) + " vs o1 " + fmt(l2(s0, o1)) + "; " + fmt(minutes, 3) + " min"};
}

// Shared by criteria 8 and 10: the tiny config run into a fresh directory.
std::vector<StageOutcome> tiny_run(const Context& ctx, const std::string& name) {
  const auto root = ctx.work / name;
  fs::remove_all(root);
  return run_pipeline(load_config(ctx, "tiny.json"), root);
}

Result protocol_fidelity(const Context& ctx) {
  tiny_run(ctx, "tiny_protocols");
  const auto root = ctx.work / "tiny_protocols";
  const auto header = [&](const std::string& file) { return csv_rows(root / "report" / file).at(0); };
  using Row = std::vector<std::string>;
  const bool t2 = header("table2.csv") == Row{"layer", "data", "original", "synth", "ori+synth"};
  const bool t3 = header("table3.csv") == Row{"data", "original", "synth-1D", "synth-2D", "ori+synth-1D", "ori+synth-2D"};
  const bool t4 = header("table4.csv") == Row{"data", "80%-1D", "80%-2D", "40%-1D", "40%-2D", "20%-1D", "20%-2D"};

  const auto cfg = load_config(ctx, "tiny.json");
  const auto hier = EvalReport::read_csv(root / "eval" / "hierarchical.csv");
  const auto rt = EvalReport::read_csv(root / "eval" / "realtime.csv");
  int compared = 0, mismatched = 0;
  for (const auto& d : cfg.datasets)
    for (const auto& r : rt.rows) {
      if (r.dataset != d.spec.dataset_id || r.crop_length != static_cast<int>(d.spec.target_length)) continue;
      for (const auto& h : hier.rows)
        if (h.level == "L3" && h.dataset == r.dataset && h.scenario == r.scenario) {
          ++compared;
          if (h.accuracy != r.accuracy || h.seed != r.seed) ++mismatched;
        }
    }
  return {t2 && t3 && t4 && compared > 0 && mismatched == 0,
          std::string("table2 ") + (t2 ? "ok" : "bad") + ", table3 " + (t3 ? "ok" : "bad") + ", table4 " +
              (t4 ? "ok" : "bad") + "; full-prefix realtime vs L3: " + std::to_string(compared) + " compared, " +
              std::to_string(mismatched) + " differ"};
}

Result anomaly_entropy(const Context&) {
  bool bounded = true, ordered = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    DatasetSpec spec;
    spec.num_classes = 7;
    spec.traces_per_class = 30;
    spec.target_length = 64;
    ToyFamily family;
    family.random_walk_classes = {5, 6};
    std::vector<NormalizedTrace> traces;
    for (const auto& r : gen_toy_dataset(spec, seed, family)) traces.push_back(prepare_trace(r, spec));
    EnhanceConfig enhance;
    enhance.resolution = 32;
    const auto ds = prepare_dataset(traces, {0.8}, enhance);
    const AnomalySetup setup{{5, 6}, {0, 1, 2, 3, 4}};
    const auto u = anomaly_case2_uncertainty(ds, setup, 5, seed, HarnessConfig{});
    const double cap = std::log(static_cast<double>(u.num_classes)) + kEntropySlack;
    for (const auto* v : {&u.legitimate_entropy, &u.anomaly_entropy})
      for (double h : *v) bounded &= h >= 0.0 && h <= cap;
    ordered &= u.mean_anomaly() > u.mean_legitimate();
    detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + " anomaly " +
              fmt(u.mean_anomaly()) + " vs legitimate " + fmt(u.mean_legitimate());
  }
  return {bounded && ordered, detail + "; all entropies in [0, ln 5] " + (bounded ? "yes" : "no")};
}

Result determinism(const Context& ctx) {
  const auto a = tiny_run(ctx, "tiny_det_a"), b = tiny_run(ctx, "tiny_det_b");
  int differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i].manifest_sha256 != b[i].manifest_sha256;
  const auto run_a = read_file(ctx.work / "tiny_det_a" / "run_manifest.json");
  const auto run_b = read_file(ctx.work / "tiny_det_b" / "run_manifest.json");
  return {differ == 0 && run_a == run_b,
          std::to_string(a.size()) + " stage manifests, " + std::to_string(differ) + " differ; run manifests " +
              (run_a == run_b ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "trafficdiff_acceptance";
  ctx.source_dir = TRAFFICDIFF_SOURCE_DIR;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else {
      try {
        only.insert(std::stoi(a));
      } catch (const std::exception&) {
        std::cerr << "usage: trafficdiff_acceptance [--work DIR] [criterion...]\n";
        return 2;
      }
    }
  }
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Result(const Context&)>>> criteria{
      {"GASF round trip", gasf_round_trip},
      {"GASF analytic oracle", gasf_oracle},
      {"prefix consistency", prefix_consistency},
      {"FID closed form", fid_closed_form},
      {"diffusion marginals", diffusion_marginals},
      {"gradient check", gradient_check},
      {"end-to-end toy run", end_to_end},
      {"protocol fidelity", protocol_fidelity},
      {"anomaly entropy", anomaly_entropy},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Result r;
    try {
      r = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << "criterion " << id << " " << (r.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << r.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
