#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "../support/generators.hpp"
#include "trafficdiff/trace_ingest.hpp"

using namespace trafficdiff;
namespace fs = std::filesystem;

namespace {

RawTrace timed(std::vector<double> t, std::vector<double> v) {
  RawTrace r;
  r.timestamps = std::move(t);
  r.values = std::move(v);
  return r;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("trafficdiff_ingest_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

}  // namespace

TEST_SUITE("trace_ingest") {
  TEST_CASE("bin_trace sums values per interval") {
    CHECK(bin_trace(timed({0.1, 0.2, 0.3}, {100, 200, 50}), 0.25).values == std::vector<double>{300, 50});
    CHECK(bin_trace(timed({0.0, 0.6}, {100, 50}), 0.25).values == std::vector<double>{100, 0, 50});
    CHECK(bin_trace(timed({0.0}, {7}), 0.25).values == std::vector<double>{7});
  }

  TEST_CASE("bin_trace rejects untimed traces and bad widths") {
    RawTrace r;
    r.values = {1, 2, 3};
    CHECK_THROWS_WITH_AS(bin_trace(r, 0.25), doctest::Contains("unbinnable"), std::invalid_argument);
    CHECK_THROWS(bin_trace(timed({0.0}, {1}), 0.0));
  }

  TEST_CASE("bin_trace conserves mass") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const auto n = testgen::length(rng, 1, 60);
      auto t = testgen::real_series(rng, n, 0.0, 10.0);
      std::sort(t.begin(), t.end());
      const auto v = testgen::real_series(rng, n, 0.0, 1500.0);
      const auto binned = bin_trace(timed(t, v), 0.25);
      const double raw_sum = std::accumulate(v.begin(), v.end(), 0.0);
      const double bin_sum = std::accumulate(binned.values.begin(), binned.values.end(), 0.0);
      CHECK(bin_sum == doctest::Approx(raw_sum).epsilon(1e-12));
    }
  }

  TEST_CASE("fix_length pads and truncates") {
    const std::vector<double> a{1, 2, 3};
    CHECK(fix_length(a, 5) == std::vector<double>{1, 2, 3, 0, 0});
    const std::vector<double> b{1, 2, 3, 4, 5, 6};
    CHECK(fix_length(b, 4) == std::vector<double>{1, 2, 3, 4});
    const std::vector<double> c{1, 2};
    CHECK(fix_length(c, 2) == c);
  }

  TEST_CASE("minmax_normalize") {
    const std::vector<double> a{-1, 0, 1}, b{5, 5, 5}, c{0, 2, 8};
    CHECK(minmax_normalize(a) == std::vector<double>{0, 0.5, 1});
    CHECK(minmax_normalize(b) == std::vector<double>{0, 0, 0});
    CHECK(minmax_normalize(c) == std::vector<double>{0, 0.25, 1});
  }

  TEST_CASE("minmax_normalize is idempotent") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const auto v = testgen::real_series(rng, testgen::length(rng, 2, 50), -100.0, 100.0);
      const auto once = minmax_normalize(v);
      const auto twice = minmax_normalize(once);
      for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("direction traces map -1 to 0 and +1 to 1") {
    const std::vector<double> d{-1, 1, 1, -1};
    CHECK(minmax_normalize(d) == std::vector<double>{0, 1, 1, 0});
  }

  TEST_CASE("prepare_trace yields target length within [0,1]") {
    std::mt19937_64 rng(3);
    DatasetSpec spec;
    spec.target_length = 40;
    for (int trial = 0; trial < 100; ++trial) {
      const auto n = testgen::length(rng, 1, 80);
      auto t = testgen::real_series(rng, n, 0.0, 20.0);
      std::sort(t.begin(), t.end());
      spec.bin_width = (trial % 2) ? std::optional<double>(0.25) : std::nullopt;
      const auto p = prepare_trace(timed(t, testgen::real_series(rng, n, 0.0, 1e4)), spec);
      REQUIRE(p.samples.size() == 40);
      for (double s : p.samples) CHECK((s >= 0.0 && s <= 1.0));
    }
  }

  TEST_CASE("split_dataset floors per class") {
    const auto make = [](int per_class, int classes) {
      std::vector<NormalizedTrace> v;
      for (int c = 0; c < classes; ++c)
        for (int k = 0; k < per_class; ++k) v.push_back({{0.0}, c, "d", std::to_string(c) + "/" + std::to_string(k)});
      return v;
    };
    auto s = split_dataset(make(100, 2), {0.8});
    CHECK(s.train.size() == 160);
    CHECK(s.test.size() == 40);
    s = split_dataset(make(5, 1), {0.8});
    CHECK(s.train.size() == 4);
    CHECK(s.test.size() == 1);
    s = split_dataset(make(2, 1), {0.5});
    CHECK(s.train.size() == 1);
    CHECK(s.test.size() == 1);
    CHECK_THROWS(split_dataset(make(1, 1), {0.8}));
  }

  TEST_CASE("split_dataset partitions every class") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<NormalizedTrace> v;
      const int classes = static_cast<int>(testgen::length(rng, 1, 5));
      for (int k = 0; k < 60; ++k) {
        const int c = static_cast<int>(rng() % static_cast<unsigned>(classes));
        v.push_back({{0.0}, c, "d", "t" + std::to_string(k)});
      }
      for (int c = 0; c < classes; ++c) {
        v.push_back({{0.0}, c, "d", "x" + std::to_string(c) + "a"});
        v.push_back({{0.0}, c, "d", "x" + std::to_string(c) + "b"});
      }
      const double f = std::uniform_real_distribution<double>(0.3, 0.9)(rng);
      const auto s = split_dataset(v, {f});
      std::set<std::string> train, test;
      for (const auto& t : s.train) train.insert(t.trace_id);
      for (const auto& t : s.test) test.insert(t.trace_id);
      CHECK(train.size() + test.size() == v.size());
      for (const auto& id : train) CHECK(test.count(id) == 0);
    }
  }

  TEST_CASE("toy generator is deterministic and balanced") {
    DatasetSpec spec;
    spec.num_classes = 2;
    spec.traces_per_class = 10;
    const auto a = gen_toy_dataset(spec, 42), b = gen_toy_dataset(spec, 42);
    REQUIRE(a.size() == 20);
    int zeros = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].values == b[i].values);
      CHECK(a[i].trace_id == b[i].trace_id);
      zeros += a[i].class_label == 0;
    }
    CHECK(zeros == 10);
  }

  TEST_CASE("toy classes are separable by 1-nearest-neighbour") {
    DatasetSpec spec;
    spec.num_classes = 2;
    spec.traces_per_class = 40;
    const auto raw = gen_toy_dataset(spec, 9);
    std::vector<NormalizedTrace> norm;
    for (const auto& r : raw) norm.push_back(prepare_trace(r, spec));
    const auto s = split_dataset(norm, {0.5});
    int correct = 0;
    for (const auto& q : s.test) {
      double best = 1e300;
      int label = -1;
      for (const auto& t : s.train) {
        double d = 0;
        for (std::size_t i = 0; i < q.samples.size(); ++i) d += (q.samples[i] - t.samples[i]) * (q.samples[i] - t.samples[i]);
        if (d < best) best = d, label = t.class_label;
      }
      correct += label == q.class_label;
    }
    CHECK(correct > static_cast<int>(s.test.size()) * 3 / 4);
  }

  TEST_CASE("csv reading: two columns, one column with header, packet form") {
    const auto dir = scratch("csv");
    write_text(dir / "a.csv", "timestamp,value\n0.0,10\n0.5,20\n");
    write_text(dir / "b.csv", "value\n3\n4\n");
    write_text(dir / "c.csv", "0.0,100,-1\n0.1,60,1\n");
    const auto a = read_trace_csv(dir / "a.csv", "ds", 1);
    CHECK(a.timestamps == std::vector<double>{0.0, 0.5});
    CHECK(a.values == std::vector<double>{10, 20});
    CHECK(a.trace_id == "ds/1/a");
    CHECK(read_trace_csv(dir / "b.csv", "ds", 0).values == std::vector<double>{3, 4});
    CHECK(read_trace_csv(dir / "c.csv", "ds", 0).values == std::vector<double>{-100, 60});
    RawTrace w = timed({0.0, 1.5}, {2, 3});
    write_trace_csv(dir / "w.csv", w);
    const auto back = read_trace_csv(dir / "w.csv", "ds", 0);
    CHECK(back.values == w.values);
    CHECK(back.timestamps == w.timestamps);
  }

  TEST_CASE("load_dataset_dir lists every malformed file") {
    const auto dir = scratch("dir");
    write_text(dir / "0" / "t1.csv", "1\n2\n");
    write_text(dir / "0" / "bad.csv", "1\nfoo\n");
    write_text(dir / "1" / "t2.csv", "0.5,1\n0.2,2\n");
    try {
      load_dataset_dir(dir, "ds");
      FAIL("expected CsvError");
    } catch (const CsvError& e) {
      CHECK(e.files.size() == 2);
    }
    CHECK_THROWS_AS(load_dataset_dir(dir / "missing", "ds"), std::invalid_argument);
    fs::remove(dir / "0" / "bad.csv");
    fs::remove(dir / "1" / "t2.csv");
    write_text(dir / "1" / "t2.csv", "0.1,1\n0.2,2\n");
    const auto traces = load_dataset_dir(dir, "ds");
    REQUIRE(traces.size() == 2);
    CHECK(traces[0].class_label == 0);
    CHECK(traces[1].class_label == 1);
  }

  TEST_CASE("dataset manifest round trip") {
    const auto dir = scratch("manifest");
    DatasetSpec spec;
    spec.dataset_id = "d1";
    spec.bin_width = 0.25;
    spec.target_length = 480;
    spec.num_classes = 20;
    write_dataset_manifest(dir / "m.txt", spec);
    const auto back = read_dataset_manifest(dir / "m.txt");
    CHECK(back.dataset_id == "d1");
    CHECK(back.bin_width.value() == 0.25);
    CHECK(back.target_length == 480);
    CHECK(back.num_classes == 20);
    spec.bin_width.reset();
    write_dataset_manifest(dir / "m.txt", spec);
    CHECK_FALSE(read_dataset_manifest(dir / "m.txt").bin_width.has_value());
  }
}
