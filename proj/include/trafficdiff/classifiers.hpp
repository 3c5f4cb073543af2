#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace trafficdiff {

enum class ClassifierKind { kConv2d, kConv1d, kMlp, kNaiveBayes, kRandomForest, kGradientBoostedTrees };

std::string to_string(ClassifierKind kind);
/// Accepts conv2d, conv1d, mlp, naive_bayes, random_forest,
/// gradient_boosted_trees (xgboost is accepted as an alias).
ClassifierKind classifier_from_string(const std::string& name);

/// Samples of identical shape (height x width, single channel). 1D inputs use
/// height == 1.
struct FeatureSet {
  int height = 0;
  int width = 0;
  std::vector<std::vector<float>> rows;
  std::vector<int> labels;

  std::size_t size() const { return rows.size(); }
  void add(std::vector<float> row, int label);
};

struct ClassifierConfig {
  // conv2d / conv1d
  std::vector<int> conv_channels{8, 16, 16};
  int conv_epochs = 30;
  // mlp
  int mlp_hidden = 64;
  int mlp_epochs = 60;
  // shared by the neural models
  int batch_size = 16;
  double learning_rate = 2e-3;
  // naive_bayes
  double nb_var_smoothing = 1e-9;
  // random_forest
  int forest_trees = 100;
  int forest_max_depth = 12;
  // gradient_boosted_trees
  int boost_rounds = 40;
  int boost_max_depth = 3;
  double boost_learning_rate = 0.3;
  double boost_lambda = 1.0;
  double boost_colsample = 0.1;
};

/// Labels are arbitrary integers; predict_proba columns follow classes().
class Classifier {
 public:
  virtual ~Classifier() = default;

  /// Deterministic for a fixed seed.
  virtual void fit(const FeatureSet& train, std::uint64_t seed) = 0;
  virtual std::vector<std::vector<double>> predict_proba(const FeatureSet& data) = 0;

  std::vector<int> predict(const FeatureSet& data);
  const std::vector<int>& classes() const { return classes_; }

 protected:
  /// Sorted distinct labels of `train` and the per-row class index.
  std::vector<int> index_labels(const FeatureSet& train);

  std::vector<int> classes_;
};

std::unique_ptr<Classifier> make_classifier(ClassifierKind kind, const ClassifierConfig& cfg = {});

}  // namespace trafficdiff
