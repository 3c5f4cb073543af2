#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trafficdiff/enhance.hpp"

namespace trafficdiff {

/// Feature extractors for FID. "pixel": 8x8 area-resize flattened (d = 64).
/// "convnet": frozen, fixed-seed three-stage convolutional net (d = 128).
std::vector<std::vector<double>> embed_images(std::span<const PixelImage> images, const std::string& embedder_id);

/// Embedding dimension of an embedder; throws for unknown ids.
std::size_t embedding_dim(const std::string& embedder_id);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;
};

/// Sample mean and covariance with 1/(N-1) normalization; needs N >= 2.
GaussianStats gaussian_stats(std::span<const std::vector<double>> vectors);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
/// square root is taken from the eigenvalues of S_a^{1/2} S_b S_a^{1/2};
/// negative eigenvalues within 1e-10 of the largest are clamped to zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct ClassFid {
  int class_label = 0;
  double fid = 0.0;
  std::size_t synthetic_used = 0;
  std::size_t original_used = 0;
};

struct FidReport {
  std::string dataset_id;
  std::string embedder_id;
  std::vector<ClassFid> per_class;
  double mean = 0.0;
  /// Population standard deviation over classes.
  double stddev = 0.0;
};

/// Mean and population standard deviation of the per-class values.
void summarize(FidReport& report);

/// Per class: n synthetic images drawn without replacement (seeded) compared
/// against every original image of that class. Classes are matched by
/// provenance.class_label; a class present in only one set is rejected.
FidReport fid_per_class(std::span<const PixelImage> original, std::span<const PixelImage> synthetic, std::size_t n,
                        const std::string& embedder_id, std::uint64_t seed);

/// Normalized pooled pixel histogram over [0,1].
std::vector<double> pixel_histogram(std::span<const PixelImage> images, int bins);

/// Histogram intersection of the pooled pixel histograms, in [0,1].
double histogram_compare(std::span<const PixelImage> original, std::span<const PixelImage> synthetic, int bins);

}  // namespace trafficdiff
