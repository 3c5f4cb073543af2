#include "json_convert.hpp"

namespace trafficdiff {

Json to_json(const nn::UNetConfig& cfg) {
  return Json{{"in_channels", cfg.in_channels}, {"base_channels", cfg.base_channels},
              {"channel_mult", cfg.channel_mult}, {"time_dim", cfg.time_dim},
              {"embed_dim", cfg.embed_dim},       {"num_classes", cfg.num_classes},
              {"one_d", cfg.one_d}};
}

nn::UNetConfig unet_config_from_json(const Json& j, const nn::UNetConfig& defaults) {
  nn::UNetConfig cfg = defaults;
  cfg.in_channels = j.value("in_channels", cfg.in_channels);
  cfg.base_channels = j.value("base_channels", cfg.base_channels);
  cfg.channel_mult = j.value("channel_mult", cfg.channel_mult);
  cfg.time_dim = j.value("time_dim", cfg.time_dim);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  cfg.one_d = j.value("one_d", cfg.one_d);
  return cfg;
}

Json to_json(const DiffusionConfig& cfg) {
  return Json{{"diffusion_steps", cfg.diffusion_steps},
              {"beta_start", cfg.beta_start},
              {"beta_end", cfg.beta_end},
              {"denoiser", to_json(cfg.denoiser)},
              {"learning_rate", cfg.optimizer.learning_rate},
              {"adam_beta1", cfg.optimizer.beta1},
              {"adam_beta2", cfg.optimizer.beta2},
              {"adam_epsilon", cfg.optimizer.epsilon},
              {"clip_norm", cfg.optimizer.clip_norm},
              {"ema_decay", cfg.ema_decay},
              {"train_steps", cfg.train_steps},
              {"batch_size", cfg.batch_size},
              {"sample_batch", cfg.sample_batch},
              {"checkpoint_every", cfg.checkpoint_every}};
}

DiffusionConfig diffusion_config_from_json(const Json& j, const DiffusionConfig& defaults) {
  DiffusionConfig cfg = defaults;
  cfg.diffusion_steps = j.value("diffusion_steps", cfg.diffusion_steps);
  cfg.beta_start = j.value("beta_start", cfg.beta_start);
  cfg.beta_end = j.value("beta_end", cfg.beta_end);
  if (j.contains("denoiser")) cfg.denoiser = unet_config_from_json(j["denoiser"], cfg.denoiser);
  cfg.optimizer.learning_rate = j.value("learning_rate", cfg.optimizer.learning_rate);
  cfg.optimizer.beta1 = j.value("adam_beta1", cfg.optimizer.beta1);
  cfg.optimizer.beta2 = j.value("adam_beta2", cfg.optimizer.beta2);
  cfg.optimizer.epsilon = j.value("adam_epsilon", cfg.optimizer.epsilon);
  cfg.optimizer.clip_norm = j.value("clip_norm", cfg.optimizer.clip_norm);
  cfg.ema_decay = j.value("ema_decay", cfg.ema_decay);
  cfg.train_steps = j.value("train_steps", cfg.train_steps);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.sample_batch = j.value("sample_batch", cfg.sample_batch);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  return cfg;
}

Json to_json(const EnhanceConfig& cfg) {
  return Json{{"resolution", cfg.resolution}, {"gamma", cfg.gamma}, {"A", cfg.amplitude}};
}

EnhanceConfig enhance_config_from_json(const Json& j, const EnhanceConfig& defaults) {
  EnhanceConfig cfg = defaults;
  cfg.resolution = j.value("resolution", cfg.resolution);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.amplitude = j.value("A", cfg.amplitude);
  return cfg;
}

Json to_json(const DatasetSpec& spec) {
  Json j{{"dataset_id", spec.dataset_id},
         {"target_length", spec.target_length},
         {"num_classes", spec.num_classes},
         {"traces_per_class", spec.traces_per_class}};
  j["bin_width"] = spec.bin_width ? Json(*spec.bin_width) : Json(nullptr);
  return j;
}

DatasetSpec dataset_spec_from_json(const Json& j) {
  DatasetSpec spec;
  spec.dataset_id = j.at("dataset_id").get<std::string>();
  spec.target_length = j.value("target_length", spec.target_length);
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.traces_per_class = j.value("traces_per_class", spec.traces_per_class);
  if (j.contains("bin_width") && !j["bin_width"].is_null()) spec.bin_width = j["bin_width"].get<double>();
  return spec;
}

}  // namespace trafficdiff
