#include "trafficdiff/gasf.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "binary_io.hpp"

namespace trafficdiff {

PolarTrace to_polar(std::span<const double> samples, std::span<const double> timestamps, double radius_scale) {
  if (!timestamps.empty() && timestamps.size() != samples.size())
    throw std::invalid_argument("to_polar: timestamps and samples differ in length");
  const double scale = radius_scale > 0.0 ? radius_scale : static_cast<double>(samples.size());
  PolarTrace polar;
  polar.angles.reserve(samples.size());
  polar.radii.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i] >= 0.0 && samples[i] <= 1.0)) throw std::domain_error("to_polar: sample outside [0,1]");
    polar.angles.push_back(std::acos(samples[i]));
    const double t = timestamps.empty() ? static_cast<double>(i + 1) : timestamps[i];
    polar.radii.push_back(t / scale);
  }
  return polar;
}

std::vector<double> GasfImage::diagonal() const {
  std::vector<double> d(n_);
  for (std::size_t i = 0; i < n_; ++i) d[i] = data_[i * n_ + i];
  return d;
}

GasfImage gasf_encode(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n == 0) throw std::invalid_argument("gasf_encode: empty series");
  std::vector<double> comp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = samples[i];
    if (!(x >= 0.0 && x <= 1.0))
      throw std::domain_error("gasf_encode: sample " + std::to_string(i) + " outside [0,1]");
    comp[i] = std::sqrt(1.0 - x * x);
  }
  GasfImage image(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = std::clamp(samples[i] * samples[j] - comp[i] * comp[j], -1.0, 1.0);
      image(i, j) = v;
      image(j, i) = v;
    }
  }
  return image;
}

GasfImage gasf_encode(const NormalizedTrace& trace) {
  auto image = gasf_encode(std::span<const double>(trace.samples));
  image.class_label = trace.class_label;
  image.dataset_id = trace.dataset_id;
  return image;
}

std::vector<double> gasf_decode(const GasfImage& image, double tolerance) {
  std::vector<double> out(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double y = image(i, i);
    if (!(y >= -1.0 - tolerance && y <= 1.0 + tolerance))
      throw std::domain_error("gasf_decode: diagonal entry " + std::to_string(i) + " outside [-1,1]");
    out[i] = std::sqrt((std::clamp(y, -1.0, 1.0) + 1.0) / 2.0);
  }
  return out;
}

GasfImage crop_prefix(const GasfImage& image, std::size_t m) {
  if (m < 1 || m > image.size())
    throw std::out_of_range("crop_prefix: length " + std::to_string(m) + " outside [1, " +
                            std::to_string(image.size()) + "]");
  GasfImage out(m);
  out.class_label = image.class_label;
  out.dataset_id = image.dataset_id;
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(image.data().begin() + static_cast<std::ptrdiff_t>(i * image.size()), m,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * m));
  return out;
}

void write_gasf_raw(std::ostream& out, const GasfImage& image) {
  out.write("GASF", 4);
  io::write_u32(out, static_cast<std::uint32_t>(image.size()));
  io::write_i32(out, image.class_label);
  io::write_string(out, image.dataset_id);
  for (double v : image.data()) io::write_f32(out, static_cast<float>(v));
}

GasfImage read_gasf_raw(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "GASF") throw std::runtime_error("not a GASF record");
  const auto n = io::read_u32(in);
  GasfImage image(n);
  image.class_label = io::read_i32(in);
  image.dataset_id = io::read_string(in);
  for (double& v : image.data()) v = io::read_f32(in);
  return image;
}

}  // namespace trafficdiff
