#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "../support/generators.hpp"
#include "trafficdiff/enhance.hpp"

using namespace trafficdiff;

namespace {

GasfImage constant_gasf(std::size_t n, double v) {
  GasfImage g(n);
  for (double& x : g.data()) x = v;
  return g;
}

}  // namespace

TEST_SUITE("enhance") {
  TEST_CASE("quantization rounds half away from zero") {
    CHECK(quantize_u8(constant_gasf(1, 0.0)).pixels[0] == 128.0f);
    CHECK(quantize_u8(constant_gasf(1, -0.5)).pixels[0] == 64.0f);
    CHECK(quantize_u8(constant_gasf(1, -1.0)).pixels[0] == 0.0f);
    CHECK(quantize_u8(constant_gasf(1, 1.0)).pixels[0] == 255.0f);
  }

  TEST_CASE("quantization matches a direct formula") {
    std::mt19937_64 rng(20);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GasfImage g(9);
    for (double& v : g.data()) v = u(rng);
    const auto q = quantize_u8(g);
    CHECK(q.stage == PixelStage::kU8);
    for (std::size_t i = 0; i < 81; ++i) CHECK(q.pixels[i] == static_cast<float>(std::floor((g.data()[i] + 1) / 2 * 255 + 0.5)));
  }

  TEST_CASE("gamma correction") {
    PixelImage img(1, 3, PixelStage::kUnit);
    img.pixels = {0.0625f, 0.0f, 1.0f};
    const auto out = gamma_correct(img);
    CHECK(out.pixels[0] == doctest::Approx(0.5));
    CHECK(out.pixels[1] == 0.0f);
    CHECK(out.pixels[2] == doctest::Approx(1.0));
    CHECK(gamma_correct(img, 0.25, 4.0).pixels[0] == doctest::Approx(1.0));
    CHECK_THROWS(gamma_correct(img, 0.0));
    CHECK_THROWS(gamma_correct(img, -1.0));
  }

  TEST_CASE("gamma below one brightens and preserves order") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const auto img = testgen::unit_image(rng, 5, 5);
      const auto out = gamma_correct(img, 0.25);
      CHECK(out.mean() >= img.mean());
      for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = 0; j < 25; ++j)
          if (img.pixels[i] < img.pixels[j]) CHECK(out.pixels[i] <= out.pixels[j]);
    }
  }

  TEST_CASE("area resize averages blocks") {
    PixelImage img(2, 2, PixelStage::kUnit);
    img.pixels = {0.0f, 1.0f, 1.0f, 0.0f};
    const auto out = resize_area(img, 1, 1);
    CHECK(out.pixels[0] == doctest::Approx(0.5));
    const auto same = resize_area(img, 2, 2);
    CHECK(same.pixels == img.pixels);
  }

  TEST_CASE("area resize of quadrants and constants") {
    PixelImage img(4, 4, PixelStage::kUnit);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) img(r, c) = 0.1f * static_cast<float>(1 + (r / 2) * 2 + c / 2);
    const auto out = resize_area(img, 2, 2);
    CHECK(out(0, 0) == doctest::Approx(0.1));
    CHECK(out(0, 1) == doctest::Approx(0.2));
    CHECK(out(1, 0) == doctest::Approx(0.3));
    CHECK(out(1, 1) == doctest::Approx(0.4));
    PixelImage flat(7, 5, PixelStage::kUnit, 0.3f);
    for (float p : resize_area(flat, 3, 11).pixels) CHECK(p == doctest::Approx(0.3));
  }

  TEST_CASE("unit normalization") {
    PixelImage img(1, 3, PixelStage::kU8);
    img.pixels = {255.0f, 0.0f, 51.0f};
    const auto out = normalize_unit(img);
    CHECK(out.stage == PixelStage::kUnit);
    CHECK(out.pixels[0] == doctest::Approx(1.0));
    CHECK(out.pixels[1] == 0.0f);
    CHECK(out.pixels[2] == doctest::Approx(0.2));
    CHECK(gamma_correct(normalize_unit(img), 1.0).pixels == out.pixels);
  }

  TEST_CASE("pipeline fixed points") {
    EnhanceConfig cfg;
    cfg.resolution = 4;
    for (float p : enhance_pipeline(constant_gasf(8, -1.0), cfg).pixels) CHECK(p == 0.0f);
    for (float p : enhance_pipeline(constant_gasf(8, 1.0), cfg).pixels) CHECK(p == doctest::Approx(1.0));
  }

  TEST_CASE("area resize preserves the mean and the range") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 100; ++trial) {
      const auto h = testgen::length(rng, 1, 40), w = testgen::length(rng, 1, 40);
      const auto img = testgen::unit_image(rng, h, w);
      const auto oh = testgen::length(rng, 1, 40), ow = testgen::length(rng, 1, 40);
      const auto out = resize_area(img, oh, ow);
      REQUIRE(out.pixels.size() == oh * ow);
      float lo = 1, hi = 0;
      for (float p : img.pixels) lo = std::min(lo, p), hi = std::max(hi, p);
      for (float p : out.pixels) CHECK((p >= lo - 1e-5f && p <= hi + 1e-5f));
      // Exact for integer factors; fractional overlaps are area weighted too.
      if (h % oh == 0 && w % ow == 0) CHECK(out.mean() == doctest::Approx(img.mean()).epsilon(1e-5));
    }
  }

  TEST_CASE("pipeline ordering and outputs") {
    std::mt19937_64 rng(23);
    const auto g = gasf_encode(testgen::unit_series(rng, 128));
    const auto out = enhance_pipeline(g, {});
    CHECK(out.height == 64);
    CHECK(out.width == 64);
    for (float p : out.pixels) CHECK((p >= 0.0f && p <= 1.0f));
    const auto manual = resize_area(gamma_correct(normalize_unit(quantize_u8(g)), 0.25), 64, 64);
    CHECK(manual.pixels == out.pixels);
  }

  TEST_CASE("enhancement raises mean intensity on low-valued images") {
    const auto g = constant_gasf(8, -0.9);
    EnhanceConfig cfg;
    cfg.resolution = 8;
    const auto base = normalize_unit(quantize_u8(g));
    CHECK(enhance_pipeline(g, cfg).mean() > base.mean());
  }

  TEST_CASE("png round trip") {
    std::mt19937_64 rng(24);
    auto img = testgen::unit_image(rng, 7, 5);
    const auto path = std::filesystem::temp_directory_path() / "trafficdiff_enhance_rt.png";
    write_png(path, img);
    const auto back = normalize_unit(read_png(path));
    CHECK(back.height == 7);
    CHECK(back.width == 5);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5f / 255 + 1e-6f);
  }
}
