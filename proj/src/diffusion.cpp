#include "trafficdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "json_convert.hpp"

namespace trafficdiff {

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("noise schedule needs at least one step");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  s.beta_start = betas.front();
  s.beta_end = betas.back();
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("noise schedule betas must lie in (0,1)");
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  s.betas = std::move(betas);
  return s;
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("make_schedule: steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[i] = beta_start + f * (beta_end - beta_start);
  }
  auto s = schedule_from_betas(std::move(betas));
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  return s;
}

std::vector<float> forward_diffuse(std::span<const float> x0, double alpha_bar, std::span<const float> eps) {
  if (x0.size() != eps.size()) throw std::invalid_argument("forward_diffuse: x0 and eps differ in size");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw std::invalid_argument("forward_diffuse: alpha_bar outside [0,1]");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
  return out;
}

std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps)
    throw std::out_of_range("forward_diffuse: step " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.steps) + "]");
  return forward_diffuse(x0, schedule.alpha_bar(t), eps);
}

template <typename T>
double denoising_loss(nn::Denoiser<T>& denoiser, const nn::Tensor<T>& x0, std::span<const int> steps,
                      const nn::Tensor<T>& eps, std::span<const int> class_indices, const NoiseSchedule& schedule,
                      bool backprop) {
  if (!x0.same_shape(eps)) throw std::invalid_argument("denoising_loss: x0 and eps differ in shape");
  nn::Tensor<T> xt = x0;
  const std::size_t per = x0.sample_size();
  for (int s = 0; s < x0.n; ++s) {
    const int t = steps[s];
    if (t < 1 || t > schedule.steps) throw std::out_of_range("denoising_loss: timestep out of range");
    const T a = static_cast<T>(std::sqrt(schedule.alpha_bar(t)));
    const T b = static_cast<T>(std::sqrt(1.0 - schedule.alpha_bar(t)));
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t k = static_cast<std::size_t>(s) * per + i;
      xt.data[k] = a * x0.data[k] + b * eps.data[k];
    }
  }
  const nn::Tensor<T> pred = denoiser.forward(xt, steps, class_indices);
  double loss = 0.0;
  nn::Tensor<T> grad(pred.n, pred.c, pred.h, pred.w);
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(eps.data[i]);
    loss += d * d;
    grad.data[i] = static_cast<T>(2.0 * d * inv);
  }
  loss *= inv;
  if (backprop) denoiser.backward(grad);
  return loss;
}

template double denoising_loss(nn::Denoiser<float>&, const nn::Tensor<float>&, std::span<const int>,
                               const nn::Tensor<float>&, std::span<const int>, const NoiseSchedule&, bool);
template double denoising_loss(nn::Denoiser<double>&, const nn::Tensor<double>&, std::span<const int>,
                               const nn::Tensor<double>&, std::span<const int>, const NoiseSchedule&, bool);

namespace {

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

DiffusionModel::DiffusionModel(const DiffusionConfig& cfg, std::vector<int> class_set, std::string trained_on,
                               std::uint64_t seed)
    : cfg_(cfg),
      schedule_(make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)),
      class_set_(sorted_unique(std::move(class_set))),
      trained_on_(std::move(trained_on)),
      seed_(seed) {
  if (class_set_.empty()) throw std::invalid_argument("DiffusionModel needs at least one class");
  if (cfg_.denoiser.num_classes > 0) cfg_.denoiser.num_classes = static_cast<int>(class_set_.size());
  auto net = std::make_unique<nn::UNet<float>>(cfg_.denoiser, seed);
  ema_ = std::make_unique<nn::UNet<float>>(cfg_.denoiser, seed);
  nn::copy_values(ema_->parameters(), net->parameters());
  adam_ = std::make_unique<nn::Adam<float>>(net->parameters(), cfg_.optimizer);
  net_ = std::move(net);
}

DiffusionModel::DiffusionModel(std::unique_ptr<nn::Denoiser<float>> denoiser, const DiffusionConfig& cfg,
                               std::vector<int> class_set, std::string trained_on)
    : cfg_(cfg),
      schedule_(make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)),
      class_set_(sorted_unique(std::move(class_set))),
      trained_on_(std::move(trained_on)),
      net_(std::move(denoiser)) {
  if (class_set_.empty()) throw std::invalid_argument("DiffusionModel needs at least one class");
  adam_ = std::make_unique<nn::Adam<float>>(net_->parameters(), cfg_.optimizer);
}

int DiffusionModel::class_index(int label) const {
  const auto it = std::lower_bound(class_set_.begin(), class_set_.end(), label);
  if (it == class_set_.end() || *it != label)
    throw std::invalid_argument("class label " + std::to_string(label) + " unknown to the diffusion model");
  return static_cast<int>(it - class_set_.begin());
}

void DiffusionModel::set_image_shape(std::size_t height, std::size_t width) {
  const auto mult = static_cast<std::size_t>(cfg_.denoiser.size_multiple());
  if ((!cfg_.denoiser.one_d && height % mult != 0) || width % mult != 0)
    throw std::invalid_argument("image size must be divisible by " + std::to_string(mult) +
                                " for the configured denoiser depth");
  if (cfg_.denoiser.one_d && height != 1) throw std::invalid_argument("one-dimensional denoiser needs height 1");
  height_ = height;
  width_ = width;
}

void DiffusionModel::update_ema() {
  if (!ema_) return;
  const double k = static_cast<double>(adam_->steps_taken());
  const double decay = std::min(cfg_.ema_decay, (1.0 + k) / (10.0 + k));
  nn::ema_update(ema_->parameters(), net_->parameters(), decay);
}

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'D', 'C', 'K', 'P', 'T', '0', '1'};

void write_params(std::ostream& out, const nn::ParamList<float>& params) {
  for (const auto* p : params)
    for (float v : p->value) io::write_f32(out, v);
}

void read_params(std::istream& in, const nn::ParamList<float>& params) {
  for (auto* p : params)
    for (float& v : p->value) v = io::read_f32(in);
}

}  // namespace

void DiffusionModel::save(const std::filesystem::path& path) const {
  auto* net = dynamic_cast<nn::UNet<float>*>(net_.get());
  if (!net) throw std::logic_error("only U-Net denoisers can be checkpointed");
  Json header;
  header["format"] = "trafficdiff-checkpoint";
  header["version"] = 1;
  header["config"] = to_json(cfg_);
  header["schedule"] = {{"steps", schedule_.steps}, {"beta_start", schedule_.beta_start},
                        {"beta_end", schedule_.beta_end}};
  header["class_set"] = class_set_;
  header["trained_on"] = trained_on_;
  header["seed"] = seed_;
  header["image_shape"] = {height_, width_};
  header["optimizer_steps"] = adam_->steps_taken();
  Json params = Json::array();
  for (const auto* p : net->parameters()) params.push_back({{"name", p->name}, {"size", p->value.size()}});
  header["parameters"] = params;
  header["blocks"] = {"net", "ema"};

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    io::write_string(out, header.dump());
    write_params(out, net->parameters());
    write_params(out, ema_->parameters());
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

DiffusionModel DiffusionModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic))
    throw std::runtime_error(path.string() + " is not a trafficdiff checkpoint");
  const Json header = Json::parse(io::read_string(in));
  const auto cfg = diffusion_config_from_json(header.at("config"));
  DiffusionModel model(cfg, header.at("class_set").get<std::vector<int>>(),
                       header.at("trained_on").get<std::string>(), header.at("seed").get<std::uint64_t>());
  const auto shape = header.at("image_shape").get<std::vector<std::size_t>>();
  model.height_ = shape.at(0);
  model.width_ = shape.at(1);
  const auto declared = header.at("parameters");
  const auto params = model.net_->parameters();
  if (declared.size() != params.size()) throw std::runtime_error("checkpoint parameter layout mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (declared[i].at("name").get<std::string>() != params[i]->name ||
        declared[i].at("size").get<std::size_t>() != params[i]->value.size())
      throw std::runtime_error("checkpoint parameter mismatch at " + params[i]->name);
  read_params(in, params);
  read_params(in, model.ema_->parameters());
  return model;
}

double training_step(DiffusionModel& model, std::span<const PixelImage> batch, std::mt19937_64& rng) {
  if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
  const auto h = static_cast<int>(batch.front().height);
  const auto w = static_cast<int>(batch.front().width);
  nn::Tensor<float> x0(static_cast<int>(batch.size()), 1, h, w);
  nn::Tensor<float> eps(x0.n, 1, h, w);
  std::vector<int> steps(batch.size()), labels(batch.size());
  std::uniform_int_distribution<int> pick_t(1, model.schedule().steps);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& img = batch[s];
    if (static_cast<int>(img.height) != h || static_cast<int>(img.width) != w)
      throw std::invalid_argument("training_step: images differ in size");
    labels[s] = model.class_index(img.provenance.class_label);
    steps[s] = pick_t(rng);
    float* dst = x0.sample(static_cast<int>(s));
    for (std::size_t i = 0; i < img.pixels.size(); ++i) dst[i] = to_model_range(img.pixels[i]);
  }
  for (float& e : eps.data) e = gauss(rng);

  const double loss = denoising_loss(model.denoiser(), x0, steps, eps, labels, model.schedule(), true);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite diffusion loss at optimizer step " << model.optimizer().steps_taken() << " (batch "
        << batch.size() << ", first t " << steps.front() << ")";
    throw std::runtime_error(msg.str());
  }
  model.optimizer().step();
  model.update_ema();
  return loss;
}

DiffusionModel train(std::span<const PixelImage> dataset, const DiffusionConfig& cfg, std::string trained_on,
                     std::uint64_t seed, const std::function<void(int, double)>& progress) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<int> labels;
  for (const auto& img : dataset) labels.push_back(img.provenance.class_label);
  DiffusionModel model(cfg, labels, std::move(trained_on), seed);
  model.set_image_shape(dataset.front().height, dataset.front().width);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<PixelImage> batch(static_cast<std::size_t>(std::max(1, cfg.batch_size)));
  for (int step = 0; step < cfg.train_steps; ++step) {
    for (auto& b : batch) b = dataset[pick(rng)];
    const double loss = training_step(model, batch, rng);
    model.loss_curve.push_back(loss);
    if (progress) progress(step + 1, loss);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && (step + 1) % cfg.checkpoint_every == 0)
      model.save(cfg.checkpoint_path);
  }
  return model;
}

std::vector<PixelImage> sample(DiffusionModel& model, int class_label, int count, std::mt19937_64& rng) {
  if (count < 0) throw std::invalid_argument("sample: negative count");
  const int class_idx = model.class_index(class_label);
  std::vector<PixelImage> out;
  if (count == 0) return out;
  if (model.image_height() == 0) throw std::logic_error("sample: model has no image shape (untrained?)");

  const auto h = static_cast<int>(model.image_height());
  const auto w = static_cast<int>(model.image_width());
  const auto& sch = model.schedule();
  auto& net = model.sampling_denoiser();
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  const int chunk = std::max(1, model.config().sample_batch);

  for (int start = 0; start < count; start += chunk) {
    const int n = std::min(chunk, count - start);
    nn::Tensor<float> x(n, 1, h, w);
    for (float& v : x.data) v = gauss(rng);
    const std::vector<int> labels(static_cast<std::size_t>(n), class_idx);
    std::vector<int> steps(static_cast<std::size_t>(n));
    for (int t = sch.steps; t >= 1; --t) {
      std::fill(steps.begin(), steps.end(), t);
      const nn::Tensor<float> eps_hat = net.forward(x, steps, labels);
      const double inv_sqrt_alpha = 1.0 / std::sqrt(sch.alpha(t));
      const double coef = sch.beta(t) / std::sqrt(1.0 - sch.alpha_bar(t));
      const double sigma = std::sqrt(sch.beta(t));
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        double v = inv_sqrt_alpha * (x.data[i] - coef * eps_hat.data[i]);
        if (t > 1) v += sigma * gauss(rng);
        x.data[i] = static_cast<float>(v);
      }
    }
    for (int s = 0; s < n; ++s) {
      PixelImage img(static_cast<std::size_t>(h), static_cast<std::size_t>(w), PixelStage::kUnit);
      img.provenance = {model.trained_on(), class_label, 0};
      const float* src = x.sample(s);
      for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = to_storage_range(std::clamp(src[i], -1.0f, 1.0f));
      out.push_back(std::move(img));
    }
  }
  return out;
}

}  // namespace trafficdiff
