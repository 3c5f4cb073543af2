#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "trafficdiff/nn/tensor.hpp"

namespace trafficdiff::nn {

// Layers cache what their backward pass needs from the most recent forward
// call; a layer instance therefore serves one forward/backward pair at a time.

/// Stride-1 convolution with "same" zero padding and an odd kh x kw kernel.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kh, int kw);

  /// He-uniform weights scaled by `gain`, zero bias.
  void init(std::mt19937_64& rng, double gain = 1.0);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(ParamList<T>& out);

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

  Param<T> weight;
  Param<T> bias;

 private:
  int cin_ = 0, cout_ = 0, kh_ = 1, kw_ = 1;
  Tensor<T> input_;
};

/// y = x W^T + b over tensors shaped (n, features, 1, 1).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  void init(std::mt19937_64& rng, double gain = 1.0);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(ParamList<T>& out);

  Param<T> weight;
  Param<T> bias;

 private:
  int in_ = 0, out_ = 0;
  Tensor<T> input_;
};

/// Lookup table mapping integer ids to rows of shape (n, dim, 1, 1).
template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(std::string name, int count, int dim);

  void init(std::mt19937_64& rng, double scale = 1.0);
  Tensor<T> forward(std::span<const int> ids);
  void backward(const Tensor<T>& dy);
  void collect(ParamList<T>& out);

  int count() const { return count_; }

  Param<T> table;

 private:
  int count_ = 0, dim_ = 0;
  std::vector<int> ids_;
};

template <typename T>
class SiLU {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy) const;

 private:
  Tensor<T> input_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy) const;

 private:
  Tensor<T> input_;
};

/// Non-overlapping ph x pw mean pooling; h and w must divide evenly.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int ph, int pw);
template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& dy, int ph, int pw);

/// Nearest-neighbour upsampling by (ph, pw).
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int ph, int pw);
template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, int ph, int pw);

/// Mean over each channel plane: (n, c, h, w) -> (n, c, 1, 1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, int h, int w);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Splits a channel-concatenated gradient back into its two parts.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& d, int first_channels);

/// Transformer-style sinusoidal features of integer timesteps, (n, dim, 1, 1).
template <typename T>
Tensor<T> sinusoidal_embedding(std::span<const int> steps, int dim);

/// Row-wise softmax of (n, k, 1, 1) logits.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Mean cross-entropy of logits against labels; fills dlogits when non-null.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* dlogits);

}  // namespace trafficdiff::nn
