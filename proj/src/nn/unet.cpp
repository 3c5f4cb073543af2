#include "trafficdiff/nn/unet.hpp"

#include <stdexcept>

namespace trafficdiff::nn {

template <typename T>
ResBlock<T>::ResBlock(const std::string& name, int in_channels, int out_channels, int embed_dim, int kh, int kw)
    : conv1_(name + ".conv1", in_channels, out_channels, kh, kw),
      conv2_(name + ".conv2", out_channels, out_channels, kh, kw),
      proj_(name + ".emb", embed_dim, out_channels),
      out_channels_(out_channels) {
  if (in_channels != out_channels)
    skip_ = std::make_unique<Conv2d<T>>(name + ".skip", in_channels, out_channels, 1, 1);
}

template <typename T>
void ResBlock<T>::init(std::mt19937_64& rng) {
  conv1_.init(rng);
  conv2_.init(rng, 0.5);
  proj_.init(rng, 0.5);
  if (skip_) skip_->init(rng, 0.5);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, const Tensor<T>& emb) {
  Tensor<T> h = conv1_.forward(act1_.forward(x));
  const Tensor<T> e = proj_.forward(emb);
  const std::size_t hw = h.plane();
  for (int s = 0; s < h.n; ++s)
    for (int ch = 0; ch < out_channels_; ++ch) {
      T* p = h.sample(s) + static_cast<std::size_t>(ch) * hw;
      const T bias = e.data[static_cast<std::size_t>(s) * out_channels_ + ch];
      for (std::size_t i = 0; i < hw; ++i) p[i] += bias;
    }
  Tensor<T> out = conv2_.forward(act2_.forward(h));
  const Tensor<T> skip = skip_ ? skip_->forward(x) : x;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += skip.data[i];
  return out;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& dy, Tensor<T>& demb) {
  const Tensor<T> dh = act2_.backward(conv2_.backward(dy));
  Tensor<T> de(dh.n, out_channels_, 1, 1);
  const std::size_t hw = dh.plane();
  for (int s = 0; s < dh.n; ++s)
    for (int ch = 0; ch < out_channels_; ++ch) {
      const T* p = dh.sample(s) + static_cast<std::size_t>(ch) * hw;
      T acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      de.data[static_cast<std::size_t>(s) * out_channels_ + ch] = acc;
    }
  const Tensor<T> de_in = proj_.backward(de);
  for (std::size_t i = 0; i < demb.data.size(); ++i) demb.data[i] += de_in.data[i];

  Tensor<T> dx = act1_.backward(conv1_.backward(dh));
  const Tensor<T> dskip = skip_ ? skip_->backward(dy) : dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dskip.data[i];
  return dx;
}

template <typename T>
void ResBlock<T>::collect(ParamList<T>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  proj_.collect(out);
  if (skip_) skip_->collect(out);
}

template <typename T>
UNet<T>::UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.levels() < 1) throw std::invalid_argument("UNet needs at least one level");
  if (cfg.time_dim < 2 || cfg.time_dim % 2 != 0) throw std::invalid_argument("UNet time_dim must be even");
  const int kh = cfg.one_d ? 1 : 3;
  ph_ = cfg.one_d ? 1 : 2;
  pw_ = 2;
  for (int m : cfg.channel_mult) channels_.push_back(cfg.base_channels * m);

  time1_ = Linear<T>("time.fc1", cfg.time_dim, cfg.embed_dim);
  time2_ = Linear<T>("time.fc2", cfg.embed_dim, cfg.embed_dim);
  if (cfg.num_classes > 0) class_embed_ = std::make_unique<Embedding<T>>("class", cfg.num_classes, cfg.embed_dim);
  conv_in_ = Conv2d<T>("conv_in", cfg.in_channels, channels_[0], kh, 3);
  int prev = channels_[0];
  for (int l = 0; l < cfg.levels(); ++l) {
    enc_.emplace_back("enc" + std::to_string(l), prev, channels_[l], cfg.embed_dim, kh, 3);
    prev = channels_[l];
  }
  mid_ = ResBlock<T>("mid", prev, prev, cfg.embed_dim, kh, 3);
  dec_.resize(static_cast<std::size_t>(std::max(0, cfg.levels() - 1)));
  for (int l = cfg.levels() - 2; l >= 0; --l) {
    dec_[l] = ResBlock<T>("dec" + std::to_string(l), channels_[l + 1] + channels_[l], channels_[l], cfg.embed_dim,
                          kh, 3);
  }
  conv_out_ = Conv2d<T>("conv_out", channels_[0], cfg.in_channels, kh, 3);

  std::mt19937_64 rng(seed);
  time1_.init(rng);
  time2_.init(rng);
  if (class_embed_) class_embed_->init(rng);
  conv_in_.init(rng);
  for (auto& b : enc_) b.init(rng);
  mid_.init(rng);
  for (auto& b : dec_) b.init(rng);
  conv_out_.init(rng, 0.1);
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, std::span<const int> steps, std::span<const int> labels) {
  const int mult = cfg_.size_multiple();
  if ((!cfg_.one_d && x.h % mult != 0) || x.w % mult != 0)
    throw std::invalid_argument("UNet input size must be divisible by " + std::to_string(mult));
  if (static_cast<int>(steps.size()) != x.n) throw std::invalid_argument("UNet: one timestep per sample");

  Tensor<T> e = time2_.forward(time_act_.forward(time1_.forward(sinusoidal_embedding<T>(steps, cfg_.time_dim))));
  if (class_embed_) {
    if (static_cast<int>(labels.size()) != x.n) throw std::invalid_argument("UNet: one label per sample");
    const Tensor<T> ce = class_embed_->forward(labels);
    for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] += ce.data[i];
  }
  const Tensor<T> ea = emb_act_.forward(e);

  const int levels = cfg_.levels();
  std::vector<Tensor<T>> skips(static_cast<std::size_t>(levels));
  Tensor<T> h = conv_in_.forward(x);
  for (int l = 0; l < levels; ++l) {
    h = enc_[l].forward(h, ea);
    if (l < levels - 1) {
      skips[l] = h;
      h = avg_pool(h, ph_, pw_);
    }
  }
  h = mid_.forward(h, ea);
  for (int l = levels - 2; l >= 0; --l) {
    h = dec_[l].forward(concat_channels(upsample_nearest(h, ph_, pw_), skips[l]), ea);
  }
  return conv_out_.forward(out_act_.forward(h));
}

template <typename T>
void UNet<T>::backward(const Tensor<T>& dy) {
  const int levels = cfg_.levels();
  Tensor<T> dh = out_act_.backward(conv_out_.backward(dy));
  Tensor<T> dea(dy.n, cfg_.embed_dim, 1, 1);
  std::vector<Tensor<T>> dskips(static_cast<std::size_t>(levels));
  for (int l = 0; l <= levels - 2; ++l) {
    auto [dup, dskip] = split_channels(dec_[l].backward(dh, dea), channels_[l + 1]);
    dskips[l] = std::move(dskip);
    dh = upsample_nearest_backward(dup, ph_, pw_);
  }
  dh = mid_.backward(dh, dea);
  for (int l = levels - 1; l >= 0; --l) {
    dh = enc_[l].backward(dh, dea);
    if (l > 0) {
      dh = avg_pool_backward(dh, ph_, pw_);
      for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dskips[l - 1].data[i];
    }
  }
  conv_in_.backward(dh);

  const Tensor<T> de = emb_act_.backward(dea);
  if (class_embed_) class_embed_->backward(de);
  time1_.backward(time_act_.backward(time2_.backward(de)));
}

template <typename T>
ParamList<T> UNet<T>::parameters() {
  ParamList<T> out;
  time1_.collect(out);
  time2_.collect(out);
  if (class_embed_) class_embed_->collect(out);
  conv_in_.collect(out);
  for (auto& b : enc_) b.collect(out);
  mid_.collect(out);
  for (auto& b : dec_) b.collect(out);
  conv_out_.collect(out);
  return out;
}

template <typename T>
std::size_t UNet<T>::parameter_count() {
  std::size_t total = 0;
  for (auto* p : parameters()) total += p->value.size();
  return total;
}

template class ResBlock<float>;
template class ResBlock<double>;
template class UNet<float>;
template class UNet<double>;

}  // namespace trafficdiff::nn
