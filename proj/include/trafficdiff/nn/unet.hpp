#pragma once

#include <memory>
#include <random>
#include <span>
#include <vector>

#include "trafficdiff/nn/layers.hpp"

namespace trafficdiff::nn {

/// Predicts the noise component of a noised batch given per-sample
/// timesteps and class labels.
template <typename T>
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, std::span<const int> steps, std::span<const int> labels) = 0;
  /// Accumulates parameter gradients for the last forward call.
  virtual void backward(const Tensor<T>& dy) = 0;
  virtual ParamList<T> parameters() = 0;
};

/// Always predicts zero noise. Has no parameters.
template <typename T>
class ZeroDenoiser final : public Denoiser<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, std::span<const int>, std::span<const int>) override {
    return Tensor<T>(x.n, x.c, x.h, x.w);
  }
  void backward(const Tensor<T>&) override {}
  ParamList<T> parameters() override { return {}; }
};

struct UNetConfig {
  int in_channels = 1;
  int base_channels = 8;
  /// One entry per resolution level; level l has base * mult[l] channels and
  /// every level after the first halves the spatial size.
  std::vector<int> channel_mult = {1, 2, 2, 4, 4};
  int time_dim = 32;
  int embed_dim = 64;
  /// 0 disables class conditioning.
  int num_classes = 0;
  /// Signals of shape (1, w): 1x3 kernels and width-only pooling.
  bool one_d = false;

  int levels() const { return static_cast<int>(channel_mult.size()); }
  /// Spatial sizes must be divisible by 2^(levels-1).
  int size_multiple() const { return 1 << (levels() - 1); }
};

/// Pre-activation residual block with an additive embedding bias between
/// its two convolutions.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, int in_channels, int out_channels, int embed_dim, int kh, int kw);

  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& emb);
  /// Returns dx and adds the embedding gradient into `demb`.
  Tensor<T> backward(const Tensor<T>& dy, Tensor<T>& demb);
  void collect(ParamList<T>& out);

 private:
  SiLU<T> act1_, act2_;
  Conv2d<T> conv1_, conv2_;
  Linear<T> proj_;
  std::unique_ptr<Conv2d<T>> skip_;
  int out_channels_ = 0;
};

/// U-shaped encoder/decoder denoiser with skip connections, sinusoidal time
/// embedding and optional learned class embedding added to it.
template <typename T>
class UNet final : public Denoiser<T> {
 public:
  UNet(const UNetConfig& cfg, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x, std::span<const int> steps, std::span<const int> labels) override;
  void backward(const Tensor<T>& dy) override;
  ParamList<T> parameters() override;

  const UNetConfig& config() const { return cfg_; }
  std::size_t parameter_count();

 private:
  UNetConfig cfg_;
  int ph_ = 2, pw_ = 2;
  Linear<T> time1_, time2_;
  SiLU<T> time_act_, emb_act_;
  std::unique_ptr<Embedding<T>> class_embed_;
  Conv2d<T> conv_in_, conv_out_;
  SiLU<T> out_act_;
  std::vector<ResBlock<T>> enc_, dec_;
  ResBlock<T> mid_;
  std::vector<int> channels_;
};

}  // namespace trafficdiff::nn
