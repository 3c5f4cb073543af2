#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "trafficdiff/harness.hpp"
#include "trafficdiff/seed.hpp"

using namespace trafficdiff;

namespace {

PreparedDataset toy(const std::string& id, int classes, int per_class, std::uint64_t seed, std::string type = "video",
                    std::string platform = {}, ToyFamily family = {}) {
  DatasetSpec spec;
  spec.dataset_id = id;
  spec.num_classes = classes;
  spec.traces_per_class = per_class;
  spec.target_length = 32;
  std::vector<NormalizedTrace> traces;
  for (const auto& raw : gen_toy_dataset(spec, seed, family)) traces.push_back(prepare_trace(raw, spec));
  EnhanceConfig enhance;
  enhance.resolution = 16;
  return prepare_dataset(traces, {0.8}, enhance, std::move(type), std::move(platform));
}

// Stand-in generator: jittered copies of the training images, image only.
ItemSet jitter_pool(const ItemSet& train, int per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 0.02f);
  std::map<int, std::vector<const Item*>> by_class;
  for (const auto& item : train) by_class[item.label].push_back(&item);
  ItemSet out;
  for (const auto& [label, members] : by_class)
    for (int k = 0; k < per_class; ++k) {
      Item s;
      s.label = label;
      s.synthetic = true;
      s.id = "fake/" + std::to_string(label) + "/" + std::to_string(k);
      s.image = members[static_cast<std::size_t>(k) % members.size()]->image;
      for (float& p : s.image.pixels) p = std::clamp(p + g(rng), 0.0f, 1.0f);
      out.push_back(std::move(s));
    }
  return out;
}

HarnessConfig quick(ClassifierKind kind = ClassifierKind::kConv2d) {
  HarnessConfig cfg;
  cfg.classifier = kind;
  cfg.classifier_cfg.conv_channels = {4, 8};
  cfg.classifier_cfg.conv_epochs = 8;
  cfg.classifier_cfg.forest_trees = 20;
  return cfg;
}

std::map<int, int> per_class(const ItemSet& items, bool synthetic) {
  std::map<int, int> out;
  for (const auto& item : items)
    if (item.synthetic == synthetic) ++out[item.label];
  return out;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("scenario names") {
    for (auto s : kAllScenarios) CHECK(scenario_from_string(to_string(s)) == s);
    CHECK(to_string(Scenario::kOriSynth) == "ori+synth");
    CHECK_THROWS(scenario_from_string("both"));
  }

  TEST_CASE("seed derivation is stable and tag sensitive") {
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(1, std::uint64_t{0}) != derive_seed(1, std::uint64_t{1}));
  }

  TEST_CASE("prepared items carry traces and enhanced images") {
    const auto ds = toy("t", 2, 10, 1);
    CHECK(ds.train.size() == 16);
    CHECK(ds.test.size() == 4);
    CHECK(ds.trace_length() == 32);
    CHECK(ds.classes() == std::vector<int>{0, 1});
    CHECK(ds.train[0].image.height == 16);
    CHECK(ds.train[0].trace.size() == 32);
  }

  TEST_CASE("training set arithmetic per scenario") {
    const auto ds = toy("t", 2, 100, 2);
    const auto pool = jitter_pool(ds.train, 100, 3);
    const auto orig = build_training_set(Scenario::kOriginal, ds.train, pool, 80);
    CHECK(orig.size() == ds.train.size());
    for (std::size_t i = 0; i < orig.size(); ++i) CHECK(orig[i].id == ds.train[i].id);
    const auto synth = build_training_set(Scenario::kSynth, ds.train, pool, 80);
    CHECK(per_class(synth, true) == std::map<int, int>{{0, 80}, {1, 80}});
    CHECK(per_class(synth, false).empty());
    const auto both = build_training_set(Scenario::kOriSynth, ds.train, pool, 80);
    CHECK(per_class(both, true) == std::map<int, int>{{0, 80}, {1, 80}});
    CHECK(per_class(both, false) == std::map<int, int>{{0, 80}, {1, 80}});
    CHECK_THROWS(build_training_set(Scenario::kSynth, ds.train, pool, 101));
    CHECK_THROWS(build_training_set(Scenario::kSynth, ds.train, pool, 0));
  }

  TEST_CASE("scenario sizes for random splits and pools") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const int classes = 2 + static_cast<int>(rng() % 3), n = 5 + static_cast<int>(rng() % 10);
      const auto ds = toy("t", classes, n, rng());
      const int k = 1 + static_cast<int>(rng() % 12);
      const auto pool = jitter_pool(ds.train, k + static_cast<int>(rng() % 3), rng());
      const auto both = build_training_set(Scenario::kOriSynth, ds.train, pool, k);
      CHECK(both.size() == ds.train.size() + static_cast<std::size_t>(classes * k));
    }
  }

  TEST_CASE("evaluation guards") {
    const auto ds = toy("t", 2, 10, 5);
    auto test = ds.test;
    CHECK_THROWS(train_and_eval(ClassifierKind::kNaiveBayes, ds.train, ItemSet{ds.train[0]}, 1, quick()));
    test[0].synthetic = true;
    CHECK_THROWS(train_and_eval(ClassifierKind::kNaiveBayes, ds.train, test, 1, quick()));
    ItemSet only0;
    for (const auto& item : ds.train)
      if (item.label == 0) only0.push_back(item);
    CHECK_THROWS(train_and_eval(ClassifierKind::kNaiveBayes, only0, ds.test, 1, quick()));
    ItemSet test0;
    for (const auto& item : ds.test)
      if (item.label == 0) test0.push_back(item);
    CHECK(train_and_eval(ClassifierKind::kNaiveBayes, only0, test0, 1, quick()) == 100.0);
  }

  TEST_CASE("separable toy reaches high accuracy with conv2d") {
    ToyFamily clean;
    clean.noise = 0.05;
    clean.burst_rate = 0.0;
    const auto ds = toy("t", 2, 40, 6, "video", {}, clean);
    // Oracle: nearest class-mean image must already separate the test set.
    std::map<int, std::vector<double>> mean;
    std::map<int, int> count;
    for (const auto& item : ds.train) {
      auto& m = mean[item.label];
      m.resize(item.image.pixels.size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += item.image.pixels[i];
      ++count[item.label];
    }
    for (const auto& item : ds.test) {
      int best = -1;
      double best_d = 1e300;
      for (const auto& [label, m] : mean) {
        double d = 0;
        for (std::size_t i = 0; i < m.size(); ++i) d += std::pow(item.image.pixels[i] - m[i] / count[label], 2);
        if (d < best_d) best_d = d, best = label;
      }
      REQUIRE(best == item.label);
    }
    auto cfg = quick();
    cfg.classifier_cfg.conv_epochs = 30;
    CHECK(train_and_eval(ClassifierKind::kConv2d, ds.train, ds.test, 1, cfg) >= 95.0);
  }

  TEST_CASE("random labels stay near chance") {
    double total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto ds = toy("t", 2, 20, 50 + seed);
      std::mt19937_64 rng(seed);
      for (auto* set : {&ds.train, &ds.test})
        for (auto& item : *set) item.label = static_cast<int>(rng() % 2);
      total += train_and_eval(ClassifierKind::kConv2d, ds.train, ds.test, seed, quick());
    }
    CHECK(total / 10 == doctest::Approx(50.0).epsilon(0.2));
  }

  TEST_CASE("hierarchical rows") {
    std::vector<PreparedDataset> sets{toy("a", 2, 10, 7, "video", "p1"), toy("b", 2, 10, 8, "web", "p1"),
                                      toy("c", 2, 10, 9, "iot"), toy("d", 2, 10, 10, "video", "p2")};
    std::map<std::string, ItemSet> pools;
    for (const auto& ds : sets) pools[ds.dataset_id] = jitter_pool(ds.train, 8, 1);
    const auto report =
        hierarchical_eval(sets, pools, 8, kAllScenarios, 1, quick(ClassifierKind::kNaiveBayes));
    std::map<std::string, int> by_level;
    for (const auto& row : report.rows) ++by_level[row.level];
    CHECK(by_level["L1"] == 3);
    CHECK(by_level["L2"] == 3);
    CHECK(by_level["L3"] == 12);
    sets[2].traffic_type.clear();
    CHECK_THROWS(hierarchical_eval(sets, pools, 8, kAllScenarios, 1, quick(ClassifierKind::kNaiveBayes)));
  }

  TEST_CASE("limited data sweep rows") {
    const auto ds = toy("t", 2, 20, 11);
    const std::vector<int> sizes{5, 10};
    const auto report = limited_data_sweep(ds, sizes, 10, jitter_pool, 1, quick(ClassifierKind::kNaiveBayes));
    CHECK(report.rows.size() == 6);
    CHECK(report.rows[0].train_size == 5);
    CHECK(report.rows[5].train_size == 10);
    const std::vector<int> zero{0};
    CHECK_THROWS(limited_data_sweep(ds, zero, 10, jitter_pool, 1, quick()));
  }

  TEST_CASE("anomaly setup and prefix plumbing") {
    CHECK(prefix_for_duration(45.0, 0.25) == 180);
    const auto ds = toy("t", 4, 10, 12);
    AnomalySetup bad{{0, 1}, {1, 2}};
    CHECK_THROWS(bad.validate(ds));
    const auto setup = choose_anomaly_setup(ds, 1, 2, 3);
    CHECK(setup.anomaly_classes.size() == 1);
    CHECK(setup.legitimate_classes.size() == 2);
    CHECK_NOTHROW(setup.validate(ds));
    CHECK(choose_anomaly_setup(ds, 1, 2, 3).anomaly_classes == setup.anomaly_classes);
  }

  TEST_CASE("anomaly case 1: balanced control beats the single-trace run") {
    const auto ds = toy("t", 3, 40, 13);
    const auto cfg = quick(ClassifierKind::kConv2d);
    AnomalySetup balanced{{2}, {0, 1}, 32};
    AnomalySetup starved{{2}, {0, 1}, 1};
    const auto control = anomaly_case1(ds, balanced, Scenario::kOriginal, 0, {}, 1, cfg);
    const auto few = anomaly_case1(ds, starved, Scenario::kOriginal, 0, {}, 1, cfg);
    CHECK(control.accuracy >= 90.0);
    CHECK(few.accuracy < control.accuracy);
    CHECK_THROWS(anomaly_case1(ds, starved, Scenario::kSynth, 10, {}, 1, cfg));
  }

  TEST_CASE("predictive entropy") {
    const std::vector<double> uniform(5, 0.2), onehot{0, 1, 0};
    CHECK(predictive_entropy(uniform) == doctest::Approx(std::log(5.0)));
    CHECK(predictive_entropy(onehot) == 0.0);
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 100; ++trial) {
      const auto k = 2 + rng() % 8;
      std::vector<double> p(k);
      double s = 0;
      for (double& v : p) v = std::uniform_real_distribution<double>(0, 1)(rng), s += v;
      for (double& v : p) v /= s;
      const double h = predictive_entropy(p);
      CHECK((h >= 0.0 && h <= std::log(static_cast<double>(k)) + 1e-12));
    }
    const auto ds = toy("t", 3, 10, 15);
    CHECK_THROWS(anomaly_case2_uncertainty(ds, {{2}, {0, 1}}, 1, 1, quick()));
  }

  TEST_CASE("realtime rows and the full-prefix identity") {
    const auto ds = toy("t", 2, 20, 16);
    const auto pool = jitter_pool(ds.train, 10, 2);
    const auto cfg = quick(ClassifierKind::kConv2d);
    const std::vector<std::size_t> prefixes{8, 16, 32};
    const auto rt = realtime_eval(ds, prefixes, kAllScenarios, pool, 10, 3, cfg);
    CHECK(rt.rows.size() == 9);
    const std::vector<PreparedDataset> one{ds};
    const auto l3 = hierarchical_eval(one, {{"t", pool}}, 10, kAllScenarios, 3, cfg);
    for (std::size_t s = 0; s < 3; ++s) CHECK(rt.rows[6 + s].accuracy == l3.rows[s].accuracy);
    const std::vector<std::size_t> too_long{33};
    CHECK_THROWS(realtime_eval(ds, too_long, kAllScenarios, pool, 10, 3, cfg));
  }

  TEST_CASE("cropping re-encodes traces and crops synthetic images proportionally") {
    const auto ds = toy("t", 2, 5, 17);
    const auto cropped = crop_items(ds.train, 8, 32, ds.enhance);
    const auto direct = enhance_pipeline(crop_prefix(gasf_encode(ds.train[0].trace), 8), ds.enhance);
    CHECK(cropped[0].image.pixels == direct.pixels);
    const auto pool = jitter_pool(ds.train, 1, 1);
    const auto sc = crop_items(pool, 8, 32, ds.enhance);
    CHECK(sc[0].image.height == 16);
    CHECK_THROWS(crop_items(ds.train, 0, 32, ds.enhance));
  }

  TEST_CASE("1D versus 2D comparison and synthetic count sweep") {
    const auto ds = toy("t", 2, 20, 18);
    const auto p2 = jitter_pool(ds.train, 10, 1), p1 = jitter_pool(ds.train, 10, 2);
    const auto cfg = quick();
    const auto a = compare_1d_2d(ds, p2, p1, 10, 4, cfg), b = compare_1d_2d(ds, p2, p1, 10, 4, cfg);
    CHECK(a.rows == b.rows);
    CHECK(a.rows.size() == 6 + 5);
    CHECK_THROWS(compare_1d_2d(ds, p2, ItemSet{}, 10, 4, cfg));
    const std::vector<int> counts{10, 4};
    const auto sweep = synth_count_sweep(ds, p2, counts, 4, quick(ClassifierKind::kNaiveBayes));
    REQUIRE(sweep.rows.size() == 4);
    CHECK(sweep.rows[0].variant == "original");
    CHECK(sweep.rows[1].variant == "synth@4");
    CHECK(sweep.rows[2].variant == "synth@10");
    CHECK(sweep.rows[3].variant == "ori+synth");
  }

  TEST_CASE("report csv round trip") {
    EvalReport r;
    r.rows.push_back({"hierarchical", "a,\"b\"", "L3", "ori+synth", "conv2d", 16, 80, 0, "x", 87.5, 42});
    r.rows.push_back({"realtime", "c", "L1", "synth", "mlp", 4, 0, 12, "", 100.0 / 3.0, 7});
    const auto path = std::filesystem::temp_directory_path() / "trafficdiff_report_rt.csv";
    r.write_csv(path);
    const auto back = EvalReport::read_csv(path);
    CHECK(back.rows == r.rows);
  }
}
