#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "../support/generators.hpp"
#include "trafficdiff/gasf.hpp"

using namespace trafficdiff;

TEST_SUITE("gasf") {
  TEST_CASE("two-sample encoding") {
    const std::vector<double> x{0.0, 1.0};
    const auto g = gasf_encode(x);
    REQUIRE(g.size() == 2);
    CHECK(g(0, 0) == doctest::Approx(-1.0));
    CHECK(g(0, 1) == doctest::Approx(0.0));
    CHECK(g(1, 0) == doctest::Approx(0.0));
    CHECK(g(1, 1) == doctest::Approx(1.0));
  }

  TEST_CASE("constant half series") {
    const std::vector<double> x(4, 0.5);
    const auto g = gasf_encode(x);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(g(i, j) == doctest::Approx(-0.5));
  }

  TEST_CASE("entries match the angle-sum cosine") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 100; ++trial) {
      const auto x = testgen::unit_series(rng, testgen::length(rng, 1, 40));
      const auto g = gasf_encode(x);
      for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j)
          CHECK(g(i, j) == doctest::Approx(std::cos(std::acos(x[i]) + std::acos(x[j]))).epsilon(1e-12));
    }
  }

  TEST_CASE("symmetric, bounded and diagonal is 2x^2 - 1") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const auto x = testgen::unit_series(rng, testgen::length(rng, 1, 64));
      const auto g = gasf_encode(x);
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(g(i, i) == doctest::Approx(2 * x[i] * x[i] - 1).epsilon(1e-12));
        for (std::size_t j = 0; j < x.size(); ++j) {
          CHECK(g(i, j) == g(j, i));
          CHECK(std::abs(g(i, j)) <= 1.0);
        }
      }
    }
  }

  TEST_CASE("decode inverts encode") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const auto x = testgen::unit_series(rng, testgen::length(rng, 1, 64));
      const auto back = gasf_decode(gasf_encode(x));
      REQUIRE(back.size() == x.size());
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) <= 1e-6);
    }
  }

  TEST_CASE("prefix crop commutes with encoding") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
      const auto x = testgen::unit_series(rng, testgen::length(rng, 1, 48));
      const auto m = testgen::length(rng, 1, x.size());
      const auto a = crop_prefix(gasf_encode(x), m);
      const auto b = gasf_encode(std::span<const double>(x).first(m));
      REQUIRE(a.size() == m);
      for (std::size_t i = 0; i < m * m; ++i) CHECK(a.data()[i] == b.data()[i]);
    }
  }

  TEST_CASE("decode of hand-built diagonals") {
    GasfImage g(2);
    g(0, 0) = 1.0;
    g(1, 1) = -1.0;
    CHECK(gasf_decode(g) == std::vector<double>{1.0, 0.0});
    GasfImage h(3);
    for (std::size_t i = 0; i < 3; ++i) h(i, i) = -0.5;
    for (double x : gasf_decode(h)) CHECK(x == doctest::Approx(0.5));
  }

  TEST_CASE("crop of a full image is the identity") {
    std::mt19937_64 rng(15);
    const auto g = gasf_encode(testgen::unit_series(rng, 6));
    const auto c = crop_prefix(g, 6);
    for (std::size_t i = 0; i < 36; ++i) CHECK(c.data()[i] == g.data()[i]);
  }

  TEST_CASE("crop length must be in range") {
    const auto g = gasf_encode(std::vector<double>{0.1, 0.2, 0.3});
    CHECK_THROWS(crop_prefix(g, 0));
    CHECK_THROWS(crop_prefix(g, 4));
  }

  TEST_CASE("domain violations throw") {
    CHECK_THROWS_AS(gasf_encode(std::vector<double>{0.5, 1.2}), std::domain_error);
    CHECK_THROWS_AS(gasf_encode(std::vector<double>{-0.1}), std::domain_error);
    CHECK_THROWS_AS(gasf_encode(std::vector<double>{std::nan("")}), std::domain_error);
    GasfImage bad(2);
    bad(0, 0) = 1.5;
    CHECK_THROWS_AS(gasf_decode(bad), std::domain_error);
    bad(0, 0) = 1.0 + 1e-9;
    CHECK(gasf_decode(bad)[0] == doctest::Approx(1.0));
  }

  TEST_CASE("polar form") {
    const std::vector<double> x{1.0, 0.0, 0.5};
    const auto p = to_polar(x);
    CHECK(p.angles[0] == doctest::Approx(0.0));
    CHECK(p.angles[1] == doctest::Approx(M_PI / 2));
    CHECK(p.angles[2] == doctest::Approx(M_PI / 3));
    CHECK(p.radii[1] == doctest::Approx(2.0 / 3.0));
    CHECK(p.radii[2] == doctest::Approx(1.0));
    const std::vector<double> t{0.0, 2.0, 4.0};
    CHECK(to_polar(x, t, 4.0).radii[2] == doctest::Approx(1.0));
  }

  TEST_CASE("raw file round trip keeps float32 precision") {
    std::mt19937_64 rng(14);
    auto g = gasf_encode(testgen::unit_series(rng, 17));
    g.class_label = 3;
    g.dataset_id = "abc";
    std::stringstream ss;
    write_gasf_raw(ss, g);
    CHECK(ss.str().size() == 4 + 4 + 4 + 4 + 3 + 17 * 17 * 4);
    const auto back = read_gasf_raw(ss);
    CHECK(back.size() == 17);
    CHECK(back.class_label == 3);
    CHECK(back.dataset_id == "abc");
    for (std::size_t i = 0; i < g.data().size(); ++i)
      CHECK(back.data()[i] == static_cast<double>(static_cast<float>(g.data()[i])));
    std::stringstream junk("NOPE");
    CHECK_THROWS(read_gasf_raw(junk));
  }
}
