#include "trafficdiff/classifiers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "trafficdiff/nn/layers.hpp"
#include "trafficdiff/nn/optim.hpp"
#include "trees.hpp"

namespace trafficdiff {

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kConv2d: return "conv2d";
    case ClassifierKind::kConv1d: return "conv1d";
    case ClassifierKind::kMlp: return "mlp";
    case ClassifierKind::kNaiveBayes: return "naive_bayes";
    case ClassifierKind::kRandomForest: return "random_forest";
    case ClassifierKind::kGradientBoostedTrees: return "gradient_boosted_trees";
  }
  return "unknown";
}

ClassifierKind classifier_from_string(const std::string& name) {
  static const std::map<std::string, ClassifierKind> kinds{
      {"conv2d", ClassifierKind::kConv2d},
      {"cnn", ClassifierKind::kConv2d},
      {"conv1d", ClassifierKind::kConv1d},
      {"mlp", ClassifierKind::kMlp},
      {"naive_bayes", ClassifierKind::kNaiveBayes},
      {"nb", ClassifierKind::kNaiveBayes},
      {"random_forest", ClassifierKind::kRandomForest},
      {"rf", ClassifierKind::kRandomForest},
      {"gradient_boosted_trees", ClassifierKind::kGradientBoostedTrees},
      {"xgboost", ClassifierKind::kGradientBoostedTrees},
  };
  auto it = kinds.find(name);
  if (it == kinds.end()) throw std::invalid_argument("unknown classifier '" + name + "'");
  return it->second;
}

void FeatureSet::add(std::vector<float> row, int label) {
  if (static_cast<int>(row.size()) != height * width)
    throw std::invalid_argument("FeatureSet::add: row size does not match height x width");
  rows.push_back(std::move(row));
  labels.push_back(label);
}

std::vector<int> Classifier::predict(const FeatureSet& data) {
  const auto proba = predict_proba(data);
  std::vector<int> out;
  out.reserve(proba.size());
  for (const auto& p : proba)
    out.push_back(classes_[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())]);
  return out;
}

std::vector<int> Classifier::index_labels(const FeatureSet& train) {
  if (train.rows.empty()) throw std::invalid_argument("cannot fit a classifier on an empty training set");
  if (train.rows.size() != train.labels.size()) throw std::invalid_argument("FeatureSet rows and labels differ in size");
  classes_ = train.labels;
  std::sort(classes_.begin(), classes_.end());
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  std::vector<int> idx;
  idx.reserve(train.labels.size());
  for (int l : train.labels)
    idx.push_back(static_cast<int>(std::lower_bound(classes_.begin(), classes_.end(), l) - classes_.begin()));
  return idx;
}

namespace {

using nn::Tensor;

// Shared minibatch loop for the neural classifiers.
template <typename Net>
void fit_network(Net& net, const FeatureSet& train, const std::vector<int>& targets, int epochs, int batch_size,
                 double lr, std::mt19937_64& rng) {
  nn::ParamList<float> params;
  net.collect(params);
  nn::Adam<float> adam(params, nn::AdamConfig{lr, 0.9, 0.999, 1e-8, 5.0});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      Tensor<float> x(static_cast<int>(end - start), 1, train.height, train.width);
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) {
        const auto& row = train.rows[order[i]];
        std::copy(row.begin(), row.end(), x.sample(static_cast<int>(i - start)));
        y.push_back(targets[order[i]]);
      }
      Tensor<float> dlogits;
      const auto logits = net.forward(x);
      nn::softmax_cross_entropy(logits, y, &dlogits);
      net.backward(dlogits);
      adam.step();
    }
  }
}

template <typename Net>
std::vector<std::vector<double>> predict_network(Net& net, const FeatureSet& data, int classes) {
  std::vector<std::vector<double>> out;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    Tensor<float> x(static_cast<int>(end - start), 1, data.height, data.width);
    for (std::size_t i = start; i < end; ++i)
      std::copy(data.rows[i].begin(), data.rows[i].end(), x.sample(static_cast<int>(i - start)));
    const auto p = nn::softmax(net.forward(x));
    for (int i = 0; i < p.n; ++i) {
      const float* row = p.sample(i);
      out.emplace_back(row, row + classes);
    }
  }
  return out;
}

// Conv stages (conv, ReLU, 2x pooling), pooling to a 4-cell grid per
// spatial axis, then a linear head. The 1D variant uses 1x3 kernels and
// pools along width only.
class ConvNet {
 public:
  ConvNet(bool one_d, const std::vector<int>& channels, int height, int width, int classes) {
    const int kh = one_d ? 1 : 3;
    int cin = 1, h = height, w = width;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      convs_.emplace_back("conv" + std::to_string(i), cin, channels[i], kh, 3);
      cin = channels[i];
      if (!one_d && h % 2 == 0 && h >= 8) h /= 2;
      if (w % 2 == 0 && w >= 8) w /= 2;
      stage_h_.push_back(height / h);
      stage_w_.push_back(width / w);
      height = h;
      width = w;
    }
    relus_.resize(convs_.size());
    grid_h_ = (h % 4 == 0) ? h / 4 : h;
    grid_w_ = (w % 4 == 0) ? w / 4 : w;
    features_ = cin * (h / grid_h_) * (w / grid_w_);
    head_ = nn::Linear<float>("head", features_, classes);
  }

  void init(std::mt19937_64& rng) {
    for (auto& c : convs_) c.init(rng);
    head_.init(rng);
  }

  Tensor<float> forward(const Tensor<float>& x) {
    Tensor<float> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i)
      h = nn::avg_pool(relus_[i].forward(convs_[i].forward(h)), stage_h_[i], stage_w_[i]);
    h = nn::avg_pool(h, grid_h_, grid_w_);
    pooled_shape_ = {h.c, h.h, h.w};
    Tensor<float> flat(h.n, features_, 1, 1);
    flat.data = std::move(h.data);
    return head_.forward(flat);
  }

  void backward(const Tensor<float>& dlogits) {
    Tensor<float> d = head_.backward(dlogits);
    Tensor<float> g(d.n, pooled_shape_[0], pooled_shape_[1], pooled_shape_[2]);
    g.data = std::move(d.data);
    g = nn::avg_pool_backward(g, grid_h_, grid_w_);
    for (std::size_t i = convs_.size(); i-- > 0;)
      g = convs_[i].backward(relus_[i].backward(nn::avg_pool_backward(g, stage_h_[i], stage_w_[i])));
  }

  void collect(nn::ParamList<float>& out) {
    for (auto& c : convs_) c.collect(out);
    head_.collect(out);
  }

 private:
  std::vector<nn::Conv2d<float>> convs_;
  std::vector<nn::ReLU<float>> relus_;
  std::vector<int> stage_h_, stage_w_;
  int grid_h_ = 1, grid_w_ = 1, features_ = 0;
  std::array<int, 3> pooled_shape_{};
  nn::Linear<float> head_;
};

class ConvClassifier final : public Classifier {
 public:
  ConvClassifier(bool one_d, ClassifierConfig cfg) : one_d_(one_d), cfg_(std::move(cfg)) {}

  void fit(const FeatureSet& train, std::uint64_t seed) override {
    if (one_d_ && train.height != 1) throw std::invalid_argument("conv1d expects 1D inputs (height 1)");
    const auto targets = index_labels(train);
    std::mt19937_64 rng(seed);
    net_ = std::make_unique<ConvNet>(one_d_, cfg_.conv_channels, train.height, train.width,
                                     static_cast<int>(classes_.size()));
    net_->init(rng);
    shape_ = {train.height, train.width};
    fit_network(*net_, train, targets, cfg_.conv_epochs, cfg_.batch_size, cfg_.learning_rate, rng);
  }

  std::vector<std::vector<double>> predict_proba(const FeatureSet& data) override {
    if (!net_) throw std::logic_error("classifier used before fit");
    if (data.height != shape_[0] || data.width != shape_[1])
      throw std::invalid_argument("input shape differs from the training shape");
    return predict_network(*net_, data, static_cast<int>(classes_.size()));
  }

 private:
  bool one_d_;
  ClassifierConfig cfg_;
  std::array<int, 2> shape_{};
  std::unique_ptr<ConvNet> net_;
};

class Mlp {
 public:
  Mlp(int in, int hidden, int classes) : l1_("mlp.l1", in, hidden), l2_("mlp.l2", hidden, classes), in_(in) {}

  void init(std::mt19937_64& rng) {
    l1_.init(rng);
    l2_.init(rng);
  }
  Tensor<float> forward(const Tensor<float>& x) {
    Tensor<float> flat(x.n, in_, 1, 1);
    flat.data = x.data;
    return l2_.forward(act_.forward(l1_.forward(flat)));
  }
  void backward(const Tensor<float>& dlogits) { l1_.backward(act_.backward(l2_.backward(dlogits))); }
  void collect(nn::ParamList<float>& out) {
    l1_.collect(out);
    l2_.collect(out);
  }

 private:
  nn::Linear<float> l1_, l2_;
  nn::ReLU<float> act_;
  int in_;
};

class MlpClassifier final : public Classifier {
 public:
  explicit MlpClassifier(ClassifierConfig cfg) : cfg_(std::move(cfg)) {}

  void fit(const FeatureSet& train, std::uint64_t seed) override {
    const auto targets = index_labels(train);
    std::mt19937_64 rng(seed);
    dim_ = train.height * train.width;
    net_ = std::make_unique<Mlp>(dim_, cfg_.mlp_hidden, static_cast<int>(classes_.size()));
    net_->init(rng);
    fit_network(*net_, train, targets, cfg_.mlp_epochs, cfg_.batch_size, cfg_.learning_rate, rng);
  }

  std::vector<std::vector<double>> predict_proba(const FeatureSet& data) override {
    if (!net_) throw std::logic_error("classifier used before fit");
    if (data.height * data.width != dim_) throw std::invalid_argument("input size differs from the training size");
    return predict_network(*net_, data, static_cast<int>(classes_.size()));
  }

 private:
  ClassifierConfig cfg_;
  int dim_ = 0;
  std::unique_ptr<Mlp> net_;
};

// Gaussian naive Bayes; variances are floored at smoothing * max variance.
class NaiveBayes final : public Classifier {
 public:
  explicit NaiveBayes(ClassifierConfig cfg) : cfg_(std::move(cfg)) {}

  void fit(const FeatureSet& train, std::uint64_t) override {
    const auto targets = index_labels(train);
    const std::size_t k = classes_.size();
    const std::size_t d = train.rows.front().size();
    mean_.assign(k, std::vector<double>(d, 0.0));
    var_.assign(k, std::vector<double>(d, 0.0));
    log_prior_.assign(k, 0.0);
    std::vector<double> count(k, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto c = static_cast<std::size_t>(targets[i]);
      count[c] += 1.0;
      for (std::size_t j = 0; j < d; ++j) mean_[c][j] += train.rows[i][j];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (double& m : mean_[c]) m /= count[c];
    double max_var = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto c = static_cast<std::size_t>(targets[i]);
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = train.rows[i][j] - mean_[c][j];
        var_[c][j] += diff * diff;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (double& v : var_[c]) {
        v /= count[c];
        max_var = std::max(max_var, v);
      }
      log_prior_[c] = std::log(count[c] / static_cast<double>(train.size()));
    }
    const double floor = std::max(cfg_.nb_var_smoothing * max_var, 1e-12);
    for (auto& vs : var_)
      for (double& v : vs) v += floor;
  }

  std::vector<std::vector<double>> predict_proba(const FeatureSet& data) override {
    if (mean_.empty()) throw std::logic_error("classifier used before fit");
    std::vector<std::vector<double>> out;
    for (const auto& row : data.rows) {
      if (row.size() != mean_.front().size()) throw std::invalid_argument("input size differs from the training size");
      std::vector<double> ll(classes_.size());
      for (std::size_t c = 0; c < classes_.size(); ++c) {
        double s = log_prior_[c];
        for (std::size_t j = 0; j < row.size(); ++j) {
          const double diff = row[j] - mean_[c][j];
          s -= 0.5 * (std::log(2.0 * M_PI * var_[c][j]) + diff * diff / var_[c][j]);
        }
        ll[c] = s;
      }
      const double mx = *std::max_element(ll.begin(), ll.end());
      double z = 0.0;
      for (double& v : ll) z += (v = std::exp(v - mx));
      for (double& v : ll) v /= z;
      out.push_back(std::move(ll));
    }
    return out;
  }

 private:
  ClassifierConfig cfg_;
  std::vector<std::vector<double>> mean_, var_;
  std::vector<double> log_prior_;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(ClassifierKind kind, const ClassifierConfig& cfg) {
  switch (kind) {
    case ClassifierKind::kConv2d: return std::make_unique<ConvClassifier>(false, cfg);
    case ClassifierKind::kConv1d: return std::make_unique<ConvClassifier>(true, cfg);
    case ClassifierKind::kMlp: return std::make_unique<MlpClassifier>(cfg);
    case ClassifierKind::kNaiveBayes: return std::make_unique<NaiveBayes>(cfg);
    case ClassifierKind::kRandomForest: return detail::make_random_forest(cfg);
    case ClassifierKind::kGradientBoostedTrees: return detail::make_gradient_boosted_trees(cfg);
  }
  throw std::invalid_argument("unknown classifier kind");
}

}  // namespace trafficdiff
