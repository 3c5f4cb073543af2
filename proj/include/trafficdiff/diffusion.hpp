#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trafficdiff/enhance.hpp"
#include "trafficdiff/nn/optim.hpp"
#include "trafficdiff/nn/unet.hpp"

namespace trafficdiff {

/// beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod_{s<=t} alpha_s for
/// t = 1..steps (stored zero-based).
struct NoiseSchedule {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t - 1)); }
};

/// Linear beta interpolation between beta_start and beta_end over `steps`.
NoiseSchedule make_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);
/// Schedule from explicit betas, each in (0,1).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps.
std::vector<float> forward_diffuse(std::span<const float> x0, double alpha_bar, std::span<const float> eps);
/// Closed-form marginal q(x_t | x0) at step t in [1, T].
std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& schedule);

/// Storage range [0,1] <-> model range [-1,1].
inline float to_model_range(float p) { return 2.0f * p - 1.0f; }
inline float to_storage_range(float x) { return (x + 1.0f) / 2.0f; }

/// Mean squared error between the denoiser's prediction on the noised batch
/// and the injected noise. x0 is in model range. With `backprop` the
/// gradient of the loss is accumulated into the denoiser parameters.
template <typename T>
double denoising_loss(nn::Denoiser<T>& denoiser, const nn::Tensor<T>& x0, std::span<const int> steps,
                      const nn::Tensor<T>& eps, std::span<const int> class_indices, const NoiseSchedule& schedule,
                      bool backprop);

struct DiffusionConfig {
  int diffusion_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  nn::UNetConfig denoiser;
  nn::AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 1.0};
  double ema_decay = 0.999;
  int train_steps = 2000;
  int batch_size = 16;
  int sample_batch = 32;
  /// 0 disables periodic checkpoints.
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
};

/// Denoiser, its exponential moving average, the schedule shared by
/// training and sampling, and the class labels it was trained on.
class DiffusionModel {
 public:
  DiffusionModel(const DiffusionConfig& cfg, std::vector<int> class_set, std::string trained_on,
                 std::uint64_t seed);
  /// Wraps a caller-supplied denoiser (no EMA copy is kept).
  DiffusionModel(std::unique_ptr<nn::Denoiser<float>> denoiser, const DiffusionConfig& cfg,
                 std::vector<int> class_set, std::string trained_on);

  DiffusionModel(DiffusionModel&&) noexcept = default;
  DiffusionModel& operator=(DiffusionModel&&) noexcept = default;

  const NoiseSchedule& schedule() const { return schedule_; }
  const DiffusionConfig& config() const { return cfg_; }
  const std::vector<int>& class_set() const { return class_set_; }
  const std::string& trained_on() const { return trained_on_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t image_height() const { return height_; }
  std::size_t image_width() const { return width_; }
  void set_image_shape(std::size_t height, std::size_t width);
  bool conditional() const { return cfg_.denoiser.num_classes > 0; }

  /// Index of `label` within class_set; throws std::invalid_argument when
  /// the label is unknown.
  int class_index(int label) const;

  nn::Denoiser<float>& denoiser() { return *net_; }
  /// Network used for sampling: the EMA copy when present.
  nn::Denoiser<float>& sampling_denoiser() { return ema_ ? *ema_ : *net_; }
  nn::Adam<float>& optimizer() { return *adam_; }
  void update_ema();

  std::vector<double> loss_curve;

  void save(const std::filesystem::path& path) const;
  static DiffusionModel load(const std::filesystem::path& path);

 private:
  DiffusionConfig cfg_;
  NoiseSchedule schedule_;
  std::vector<int> class_set_;
  std::string trained_on_;
  std::uint64_t seed_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::unique_ptr<nn::Denoiser<float>> net_;
  std::unique_ptr<nn::UNet<float>> ema_;
  std::unique_ptr<nn::Adam<float>> adam_;
};

/// One optimizer step on a batch of unit-range images labeled through their
/// provenance. Draws t uniformly from [1,T] and standard-normal noise per
/// image. Throws std::runtime_error on a non-finite loss.
double training_step(DiffusionModel& model, std::span<const PixelImage> batch, std::mt19937_64& rng);

/// Runs cfg.train_steps steps on minibatches drawn with replacement;
/// writes a checkpoint every cfg.checkpoint_every steps when configured.
DiffusionModel train(std::span<const PixelImage> dataset, const DiffusionConfig& cfg, std::string trained_on,
                     std::uint64_t seed, const std::function<void(int, double)>& progress = {});

/// Ancestral sampling over all T steps with sigma_t^2 = beta_t and no noise
/// at t = 1. Output images are clamped and mapped to [0,1].
/// Deterministic for a fixed rng state. Throws for labels outside the
/// model's class set.
std::vector<PixelImage> sample(DiffusionModel& model, int class_label, int count, std::mt19937_64& rng);

}  // namespace trafficdiff
