#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trafficdiff/trace_ingest.hpp"

namespace trafficdiff {

/// Polar form of a normalized series: angle_i = arccos(x_i) and
/// radius_i = t_i / C. The radius does not enter the GASF matrix.
struct PolarTrace {
  std::vector<double> angles;
  std::vector<double> radii;
};

/// When `timestamps` is empty the sample index is used as t_i; C defaults to
/// the series length.
PolarTrace to_polar(std::span<const double> samples, std::span<const double> timestamps = {},
                    double radius_scale = 0.0);

/// n x n Gramian Angular Summation Field, row-major, entries in [-1,1].
class GasfImage {
 public:
  GasfImage() = default;
  explicit GasfImage(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::vector<double> diagonal() const;

  int class_label = 0;
  std::string dataset_id;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// M(i,j) = x_i x_j - sqrt(1-x_i^2) sqrt(1-x_j^2) = cos(arccos x_i + arccos x_j).
/// Throws std::domain_error when a sample lies outside [0,1].
GasfImage gasf_encode(std::span<const double> samples);
GasfImage gasf_encode(const NormalizedTrace& trace);

/// Recovers x_i = sqrt((Y_i + 1) / 2) from the main diagonal Y. Diagonal
/// entries may exceed [-1,1] by at most `tolerance` (they are clamped);
/// anything further throws std::domain_error.
std::vector<double> gasf_decode(const GasfImage& image, double tolerance = 1e-6);

/// Top-left m x m block, identical to encoding the first m samples.
GasfImage crop_prefix(const GasfImage& image, std::size_t m);

/// Raw record: "GASF" magic, u32 n, i32 class_label, u32 id length, id bytes,
/// then n*n little-endian float32 values in row-major order.
void write_gasf_raw(std::ostream& out, const GasfImage& image);
GasfImage read_gasf_raw(std::istream& in);

}  // namespace trafficdiff
