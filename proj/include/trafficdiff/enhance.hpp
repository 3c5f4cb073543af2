#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trafficdiff/gasf.hpp"

namespace trafficdiff {

enum class PixelStage { kU8, kUnit };

struct Provenance {
  std::string dataset_id;
  int class_label = 0;
  std::size_t original_length = 0;
};

/// Single-channel image. In the kU8 stage pixels hold integers in [0,255];
/// in the kUnit stage reals in [0,1].
struct PixelImage {
  std::size_t height = 0;
  std::size_t width = 0;
  PixelStage stage = PixelStage::kUnit;
  std::vector<float> pixels;
  Provenance provenance;

  PixelImage() = default;
  PixelImage(std::size_t h, std::size_t w, PixelStage s, float fill = 0.0f)
      : height(h), width(w), stage(s), pixels(h * w, fill) {}

  float operator()(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  float& operator()(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double mean() const;
};

/// p = round((v + 1) / 2 * 255), half away from zero, clamped to [0,255].
PixelImage quantize_u8(const GasfImage& image);

/// p / 255.
PixelImage normalize_unit(const PixelImage& image);

/// p' = A * p^gamma, clamped to [0,1]. Throws for gamma <= 0.
PixelImage gamma_correct(const PixelImage& image, double gamma = 0.25, double amplitude = 1.0);

/// Area-weighted resampling: every output pixel is the mean of the source
/// area it covers, so integer-factor decimation averages whole blocks.
PixelImage resize_area(const PixelImage& image, std::size_t out_h, std::size_t out_w);

struct EnhanceConfig {
  std::size_t resolution = 64;
  double gamma = 0.25;
  double amplitude = 1.0;
};

/// quantize_u8 -> normalize_unit -> gamma_correct -> resize_area.
PixelImage enhance_pipeline(const GasfImage& image, const EnhanceConfig& cfg);

/// 8-bit grayscale PNG; unit images are scaled by 255 and rounded.
void write_png(const std::filesystem::path& path, const PixelImage& image);
PixelImage read_png(const std::filesystem::path& path);

}  // namespace trafficdiff
