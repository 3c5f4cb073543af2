#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

#include "../support/generators.hpp"
#include "trafficdiff/fidelity.hpp"

using namespace trafficdiff;

namespace {

GaussianStats stats(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  GaussianStats s;
  s.mean = std::move(mean);
  s.covariance = std::move(cov);
  s.count = 10;
  return s;
}

Eigen::MatrixXd random_psd(std::mt19937_64& rng, int d, int rank) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(d, rank);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < rank; ++j) a(i, j) = g(rng);
  return a * a.transpose() / rank;
}

// Trace of (A B)^{1/2} from the eigenvalues of the non-symmetric product.
double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a * b);
  double t = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) t += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  return t;
}

std::vector<PixelImage> labeled(std::mt19937_64& rng, int per_class, int classes, std::size_t n, float shift = 0) {
  std::vector<PixelImage> out;
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < per_class; ++k) {
      auto img = testgen::unit_image(rng, n, n, c);
      for (float& p : img.pixels) p = std::clamp(0.5f * p + 0.2f * c + shift, 0.0f, 1.0f);
      out.push_back(img);
    }
  return out;
}

}  // namespace

TEST_SUITE("fidelity") {
  TEST_CASE("gaussian stats by hand") {
    const std::vector<std::vector<double>> v{{0, 0}, {2, 2}};
    const auto s = gaussian_stats(v);
    CHECK(s.mean(0) == 1.0);
    CHECK(s.mean(1) == 1.0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(s.covariance(i, j) == doctest::Approx(2.0));
    const std::vector<std::vector<double>> same{{1, 3}, {1, 3}, {1, 3}};
    CHECK(gaussian_stats(same).covariance.isZero());
    const std::vector<std::vector<double>> one{{1, 2}};
    CHECK_THROWS(gaussian_stats(one));
  }

  TEST_CASE("frechet distance closed forms") {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(1), three(1);
    three << 3.0;
    Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1), four = 4 * one;
    CHECK(frechet_distance(stats(zero, one), stats(zero, four)) == doctest::Approx(1.0));
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 1);
    CHECK(frechet_distance(stats(zero, z), stats(three, z)) == doctest::Approx(9.0));
    CHECK(frechet_distance(stats(three, four), stats(three, four)) == doctest::Approx(0.0).scale(1.0));
    Eigen::VectorXd two = Eigen::VectorXd::Zero(2);
    CHECK_THROWS(frechet_distance(stats(zero, one), stats(two, Eigen::MatrixXd::Identity(2, 2))));
  }

  TEST_CASE("frechet distance for diagonal covariances") {
    std::mt19937_64 rng(50);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
      const int d = static_cast<int>(testgen::length(rng, 1, 12));
      Eigen::VectorXd ma(d), mb(d), va(d), vb(d);
      double expect = 0;
      for (int i = 0; i < d; ++i) {
        ma(i) = u(rng), mb(i) = u(rng), va(i) = u(rng), vb(i) = u(rng);
        expect += (ma(i) - mb(i)) * (ma(i) - mb(i)) + std::pow(std::sqrt(va(i)) - std::sqrt(vb(i)), 2);
      }
      const double got = frechet_distance(stats(ma, va.asDiagonal()), stats(mb, vb.asDiagonal()));
      CHECK(got == doctest::Approx(expect).epsilon(1e-8));
    }
  }

  TEST_CASE("frechet distance against the product eigenvalue oracle") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 50; ++trial) {
      const int d = static_cast<int>(testgen::length(rng, 1, 10));
      const int rank = static_cast<int>(testgen::length(rng, 1, 2 * d));
      const auto a = random_psd(rng, d, rank), b = random_psd(rng, d, d + 2);
      const Eigen::VectorXd ma = Eigen::VectorXd::Random(d), mb = Eigen::VectorXd::Random(d);
      const double expect = (ma - mb).squaredNorm() + a.trace() + b.trace() - 2 * trace_sqrt_product(a, b);
      const double got = frechet_distance(stats(ma, a), stats(mb, b));
      CHECK(got == doctest::Approx(expect).epsilon(1e-6).scale(1.0));
      CHECK(got >= -1e-9);
      CHECK(frechet_distance(stats(mb, b), stats(ma, a)) == doctest::Approx(got).epsilon(1e-6).scale(1.0));
    }
  }

  TEST_CASE("embedders") {
    std::mt19937_64 rng(52);
    PixelImage flat(16, 16, PixelStage::kUnit, 0.37f);
    const std::vector<PixelImage> one{flat};
    const auto e = embed_images(one, "pixel");
    REQUIRE(e[0].size() == 64);
    for (double v : e[0]) CHECK(v == doctest::Approx(0.37));
    CHECK(embedding_dim("pixel") == 64);
    CHECK(embedding_dim("convnet") == 128);
    CHECK_THROWS(embedding_dim("inception"));
    CHECK_THROWS(embed_images(one, "inception"));

    auto img = testgen::unit_image(rng, 16, 16);
    auto poked = img;
    poked(5, 9) = 1.0f - poked(5, 9);
    const std::vector<PixelImage> pair{img, poked};
    const auto pe = embed_images(pair, "pixel");
    int changed = 0;
    for (std::size_t k = 0; k < 64; ++k)
      if (pe[0][k] != pe[1][k]) {
        ++changed;
        CHECK(k == (5 / 2) * 8 + 9 / 2);
      }
    CHECK(changed == 1);
    const auto ce = embed_images(pair, "convnet");
    CHECK(ce[0].size() == 128);
    CHECK(embed_images(pair, "convnet")[1] == ce[1]);
  }

  TEST_CASE("per-class FID: self comparison, noise and report arithmetic") {
    std::mt19937_64 rng(53);
    const auto orig = labeled(rng, 12, 2, 16);
    for (const char* emb : {"pixel", "convnet"}) {
      CAPTURE(emb);
      const auto self = fid_per_class(orig, orig, 12, emb, 1);
      REQUIRE(self.per_class.size() == 2);
      for (const auto& c : self.per_class) CHECK(std::abs(c.fid) <= 1e-6);
      auto noisy = orig;
      std::uniform_real_distribution<float> u(-0.5f, 0.5f);
      for (auto& img : noisy)
        for (float& p : img.pixels) p = std::clamp(p + u(rng), 0.0f, 1.0f);
      const auto worse = fid_per_class(orig, noisy, 12, emb, 1);
      for (std::size_t k = 0; k < 2; ++k) CHECK(worse.per_class[k].fid > self.per_class[k].fid);
    }
    FidReport r;
    r.per_class = {{0, 2.0, 0, 0}, {1, 4.0, 0, 0}};
    summarize(r);
    CHECK(r.mean == 3.0);
    CHECK(r.stddev == 1.0);
    const auto only_one = labeled(rng, 4, 1, 16);
    CHECK_THROWS(fid_per_class(orig, only_one, 4, "pixel", 1));
  }

  TEST_CASE("own-class FID is below cross-class FID on separated classes") {
    std::mt19937_64 rng(54);
    const auto a = labeled(rng, 20, 2, 16), b = labeled(rng, 20, 2, 16);
    std::vector<PixelImage> a0, a1, b0;
    for (const auto& img : a) (img.provenance.class_label ? a1 : a0).push_back(img);
    for (const auto& img : b)
      if (img.provenance.class_label == 0) b0.push_back(img);
    const auto s = [](const std::vector<PixelImage>& v) { return gaussian_stats(embed_images(v, "pixel")); };
    CHECK(frechet_distance(s(a0), s(b0)) < frechet_distance(s(a1), s(b0)));
  }

  TEST_CASE("histogram overlap") {
    PixelImage zero(2, 2, PixelStage::kUnit, 0.0f), ones(2, 2, PixelStage::kUnit, 1.0f);
    const std::vector<PixelImage> z{zero}, o{ones};
    CHECK(histogram_compare(z, z, 10) == doctest::Approx(1.0));
    CHECK(histogram_compare(z, o, 10) == doctest::Approx(0.0));
    PixelImage half(1, 2, PixelStage::kUnit);
    half.pixels = {0.0f, 1.0f};
    const std::vector<PixelImage> h{half};
    CHECK(histogram_compare(z, h, 2) == doctest::Approx(0.5));
    CHECK_THROWS(histogram_compare(std::span<const PixelImage>{}, z, 10));
    CHECK_THROWS(pixel_histogram(z, 1));
  }

  TEST_CASE("histograms are normalized and overlap is symmetric") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 30; ++trial) {
      const auto a = labeled(rng, 3, 1, 8, 0.1f), b = labeled(rng, 2, 1, 8);
      const int bins = static_cast<int>(testgen::length(rng, 2, 64));
      const auto ha = pixel_histogram(a, bins);
      double sum = 0;
      for (double v : ha) sum += v;
      CHECK(sum == doctest::Approx(1.0));
      const double ab = histogram_compare(a, b, bins);
      CHECK((ab >= 0.0 && ab <= 1.0 + 1e-12));
      CHECK(ab == doctest::Approx(histogram_compare(b, a, bins)));
    }
  }
}
