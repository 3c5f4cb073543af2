#include "trafficdiff/enhance.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace trafficdiff {

double PixelImage::mean() const {
  if (pixels.empty()) return 0.0;
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

PixelImage quantize_u8(const GasfImage& image) {
  const std::size_t n = image.size();
  PixelImage out(n, n, PixelStage::kU8);
  out.provenance = {image.dataset_id, image.class_label, n};
  const auto src = image.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double p = std::round((src[i] + 1.0) / 2.0 * 255.0);
    out.pixels[i] = static_cast<float>(std::clamp(p, 0.0, 255.0));
  }
  return out;
}

PixelImage normalize_unit(const PixelImage& image) {
  if (image.stage != PixelStage::kU8) throw std::invalid_argument("normalize_unit expects a u8-stage image");
  PixelImage out = image;
  out.stage = PixelStage::kUnit;
  for (float& p : out.pixels) p = static_cast<float>(static_cast<double>(p) / 255.0);
  return out;
}

PixelImage gamma_correct(const PixelImage& image, double gamma, double amplitude) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
  if (image.stage != PixelStage::kUnit) throw std::invalid_argument("gamma_correct expects a unit-stage image");
  PixelImage out = image;
  for (float& p : out.pixels) {
    const double v = amplitude * std::pow(std::clamp(static_cast<double>(p), 0.0, 1.0), gamma);
    p = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

namespace {

// weights[o * in + i]: fraction of output cell o covered by input cell i,
// normalized so each row sums to one.
std::vector<double> area_weights(std::size_t in, std::size_t out) {
  std::vector<double> w(out * in, 0.0);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * scale;
    const double hi = static_cast<double>(o + 1) * scale;
    const auto first = static_cast<std::size_t>(std::floor(lo));
    const auto last = std::min(in, static_cast<std::size_t>(std::ceil(hi)));
    for (std::size_t i = first; i < last; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[o * in + i] = overlap / scale;
    }
  }
  return w;
}

}  // namespace

PixelImage resize_area(const PixelImage& image, std::size_t out_h, std::size_t out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_area: output dimensions must be >= 1");
  if (out_h == image.height && out_w == image.width) return image;

  const auto wr = area_weights(image.height, out_h);
  const auto wc = area_weights(image.width, out_w);

  // Rows first, then columns.
  std::vector<double> tmp(out_h * image.width, 0.0);
  for (std::size_t o = 0; o < out_h; ++o)
    for (std::size_t i = 0; i < image.height; ++i) {
      const double w = wr[o * image.height + i];
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < image.width; ++c) tmp[o * image.width + c] += w * image(i, c);
    }

  PixelImage out(out_h, out_w, image.stage);
  out.provenance = image.provenance;
  for (std::size_t r = 0; r < out_h; ++r)
    for (std::size_t o = 0; o < out_w; ++o) {
      double acc = 0.0;
      for (std::size_t c = 0; c < image.width; ++c) acc += wc[o * image.width + c] * tmp[r * image.width + c];
      out(r, o) = static_cast<float>(acc);
    }
  return out;
}

PixelImage enhance_pipeline(const GasfImage& image, const EnhanceConfig& cfg) {
  auto unit = gamma_correct(normalize_unit(quantize_u8(image)), cfg.gamma, cfg.amplitude);
  return resize_area(unit, cfg.resolution, cfg.resolution);
}

void write_png(const std::filesystem::path& path, const PixelImage& image) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng error writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const double scale = image.stage == PixelStage::kUnit ? 255.0 : 1.0;
  std::vector<png_byte> row(image.width);
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c)
      row[c] = static_cast<png_byte>(std::clamp(std::round(image(r, c) * scale), 0.0, 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PixelImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng error reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path.string() + ": expected 8-bit grayscale PNG");
  }
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  PixelImage image(h, w, PixelStage::kU8);
  std::vector<png_byte> row(w);
  for (std::size_t r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t c = 0; c < w; ++c) image(r, c) = row[c];
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

}  // namespace trafficdiff
