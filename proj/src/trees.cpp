#include "trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace trafficdiff::detail {

namespace {

struct Node {
  int feature = -1;
  float threshold = 0.0f;
  int left = -1;
  int right = -1;
  std::vector<double> value;  // class distribution or per-output leaf weight
};

struct Tree {
  std::vector<Node> nodes;

  const std::vector<double>& leaf(const std::vector<float>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
};

struct Split {
  int feature = -1;
  float threshold = 0.0f;
  double score = 0.0;
  std::size_t left_count = 0;
};

// Scans sorted values of one feature; `gain(prefix_end)` scores the split
// that sends idx[0, prefix_end) left.
template <typename Gain>
void scan_feature(const std::vector<std::vector<float>>& rows, std::vector<std::size_t>& idx, int feature,
                  std::size_t min_leaf, Gain&& gain_at, Split& best) {
  const auto f = static_cast<std::size_t>(feature);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const float va = rows[a][f], vb = rows[b][f];
    return va < vb || (va == vb && a < b);
  });
  gain_at.reset();
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    gain_at.push(idx[i]);
    const float lo = rows[idx[i]][f], hi = rows[idx[i + 1]][f];
    if (lo == hi || i + 1 < min_leaf || idx.size() - i - 1 < min_leaf) continue;
    const double s = gain_at.score();
    if (s > best.score + 1e-12) {
      best.feature = feature;
      best.threshold = lo + (hi - lo) * 0.5f;
      if (!(best.threshold > lo && best.threshold < hi)) best.threshold = lo;
      best.score = s;
      best.left_count = i + 1;
    }
  }
}

void partition(const std::vector<std::vector<float>>& rows, const std::vector<std::size_t>& idx, const Split& s,
               std::vector<std::size_t>& left, std::vector<std::size_t>& right) {
  for (auto i : idx) (rows[i][static_cast<std::size_t>(s.feature)] <= s.threshold ? left : right).push_back(i);
}

// Gini impurity decrease, in counts.
struct GiniGain {
  const std::vector<int>& y;
  std::size_t k;
  std::vector<double> total, left;
  double n = 0.0, nl = 0.0;

  GiniGain(const std::vector<int>& labels, std::size_t classes, const std::vector<std::size_t>& idx)
      : y(labels), k(classes), total(classes, 0.0), left(classes, 0.0) {
    for (auto i : idx) total[static_cast<std::size_t>(y[i])] += 1.0;
    n = static_cast<double>(idx.size());
  }
  void reset() {
    std::fill(left.begin(), left.end(), 0.0);
    nl = 0.0;
  }
  void push(std::size_t i) {
    left[static_cast<std::size_t>(y[i])] += 1.0;
    nl += 1.0;
  }
  static double sum_sq(const std::vector<double>& c) {
    double s = 0.0;
    for (double v : c) s += v * v;
    return s;
  }
  double score() const {
    double sl = 0.0, sr = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      sl += left[c] * left[c];
      const double r = total[c] - left[c];
      sr += r * r;
    }
    // Weighted impurity n_l*(1 - sum p_l^2) + n_r*(...) against the parent's.
    const double nr = n - nl;
    const double parent = n - sum_sq(total) / n;
    return parent - ((nl - sl / nl) + (nr - sr / nr));
  }
};

class RandomForest final : public Classifier {
 public:
  explicit RandomForest(ClassifierConfig cfg) : cfg_(std::move(cfg)) {}

  void fit(const FeatureSet& train, std::uint64_t seed) override {
    const auto y = index_labels(train);
    const std::size_t n = train.size();
    const std::size_t d = train.rows.front().size();
    const auto mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    std::mt19937_64 rng(seed);
    trees_.clear();
    std::vector<int> features(d);
    std::iota(features.begin(), features.end(), 0);
    for (int t = 0; t < cfg_.forest_trees; ++t) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<std::size_t> bag(n);
      for (auto& b : bag) b = pick(rng);
      Tree tree;
      grow(tree, train.rows, y, bag, 0, mtry, features, rng);
      trees_.push_back(std::move(tree));
    }
  }

  std::vector<std::vector<double>> predict_proba(const FeatureSet& data) override {
    if (trees_.empty()) throw std::logic_error("classifier used before fit");
    std::vector<std::vector<double>> out;
    for (const auto& row : data.rows) {
      std::vector<double> p(classes_.size(), 0.0);
      for (const auto& t : trees_) {
        const auto& v = t.leaf(row);
        for (std::size_t c = 0; c < p.size(); ++c) p[c] += v[c];
      }
      for (double& v : p) v /= static_cast<double>(trees_.size());
      out.push_back(std::move(p));
    }
    return out;
  }

 private:
  int grow(Tree& tree, const std::vector<std::vector<float>>& rows, const std::vector<int>& y,
           std::vector<std::size_t> idx, int depth, std::size_t mtry, std::vector<int>& features,
           std::mt19937_64& rng) {
    const auto id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const std::size_t k = classes_.size();
    GiniGain gain(y, k, idx);
    const bool pure = std::count_if(gain.total.begin(), gain.total.end(), [](double v) { return v > 0; }) <= 1;
    Split best;
    if (!pure && depth < cfg_.forest_max_depth && idx.size() >= 2) {
      // Partial Fisher-Yates draw of mtry candidate features.
      for (std::size_t j = 0; j < mtry && j < features.size(); ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, features.size() - 1);
        std::swap(features[j], features[pick(rng)]);
        auto work = idx;
        scan_feature(rows, work, features[j], 1, gain, best);
      }
    }
    if (best.feature < 0) {
      auto& node = tree.nodes[static_cast<std::size_t>(id)];
      node.value = gain.total;
      for (double& v : node.value) v /= static_cast<double>(idx.size());
      return id;
    }
    std::vector<std::size_t> left, right;
    partition(rows, idx, best, left, right);
    tree.nodes[static_cast<std::size_t>(id)].feature = best.feature;
    tree.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(tree, rows, y, std::move(left), depth + 1, mtry, features, rng);
    const int r = grow(tree, rows, y, std::move(right), depth + 1, mtry, features, rng);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  ClassifierConfig cfg_;
  std::vector<Tree> trees_;
};

// Second-order gain G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l).
struct NewtonGain {
  const std::vector<double>& g;
  const std::vector<double>& h;
  double lambda;
  double gt = 0.0, ht = 0.0, gl = 0.0, hl = 0.0;

  NewtonGain(const std::vector<double>& grad, const std::vector<double>& hess, double l,
             const std::vector<std::size_t>& idx)
      : g(grad), h(hess), lambda(l) {
    for (auto i : idx) {
      gt += g[i];
      ht += h[i];
    }
  }
  void reset() { gl = hl = 0.0; }
  void push(std::size_t i) {
    gl += g[i];
    hl += h[i];
  }
  double score() const {
    const double gr = gt - gl, hr = ht - hl;
    return gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - gt * gt / (ht + lambda);
  }
};

// Softmax boosting with one regression tree per class per round.
class GradientBoostedTrees final : public Classifier {
 public:
  explicit GradientBoostedTrees(ClassifierConfig cfg) : cfg_(std::move(cfg)) {}

  void fit(const FeatureSet& train, std::uint64_t seed) override {
    const auto y = index_labels(train);
    const std::size_t n = train.size(), k = classes_.size();
    const std::size_t d = train.rows.front().size();
    const auto cols = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(cfg_.boost_colsample * static_cast<double>(d))), 1, d);
    std::mt19937_64 rng(seed);
    std::vector<int> features(d);
    std::iota(features.begin(), features.end(), 0);
    std::vector<std::vector<double>> score(n, std::vector<double>(k, 0.0));
    rounds_.clear();
    std::vector<double> g(n), h(n);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (int r = 0; r < cfg_.boost_rounds; ++r) {
      std::vector<std::vector<double>> prob(n);
      for (std::size_t i = 0; i < n; ++i) prob[i] = softmax(score[i]);
      std::vector<Tree> round;
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
          const double p = prob[i][c];
          g[i] = p - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0);
          h[i] = std::max(p * (1.0 - p), 1e-6);
        }
        std::shuffle(features.begin(), features.end(), rng);
        std::vector<int> subset(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(cols));
        std::sort(subset.begin(), subset.end());
        Tree tree;
        grow(tree, train.rows, g, h, all, 0, subset);
        for (std::size_t i = 0; i < n; ++i) score[i][c] += tree.leaf(train.rows[i])[0];
        round.push_back(std::move(tree));
      }
      rounds_.push_back(std::move(round));
    }
  }

  std::vector<std::vector<double>> predict_proba(const FeatureSet& data) override {
    if (rounds_.empty()) throw std::logic_error("classifier used before fit");
    std::vector<std::vector<double>> out;
    for (const auto& row : data.rows) {
      std::vector<double> s(classes_.size(), 0.0);
      for (const auto& round : rounds_)
        for (std::size_t c = 0; c < s.size(); ++c) s[c] += round[c].leaf(row)[0];
      out.push_back(softmax(s));
    }
    return out;
  }

 private:
  static std::vector<double> softmax(const std::vector<double>& s) {
    const double mx = *std::max_element(s.begin(), s.end());
    std::vector<double> p(s.size());
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) z += (p[i] = std::exp(s[i] - mx));
    for (double& v : p) v /= z;
    return p;
  }

  int grow(Tree& tree, const std::vector<std::vector<float>>& rows, const std::vector<double>& g,
           const std::vector<double>& h, std::vector<std::size_t> idx, int depth, const std::vector<int>& features) {
    const auto id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    NewtonGain gain(g, h, cfg_.boost_lambda, idx);
    Split best;
    if (depth < cfg_.boost_max_depth && idx.size() >= 2) {
      auto work = idx;
      for (int f : features) scan_feature(rows, work, f, 1, gain, best);
    }
    if (best.feature < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = {-cfg_.boost_learning_rate * gain.gt / (gain.ht + cfg_.boost_lambda)};
      return id;
    }
    std::vector<std::size_t> left, right;
    partition(rows, idx, best, left, right);
    tree.nodes[static_cast<std::size_t>(id)].feature = best.feature;
    tree.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(tree, rows, g, h, std::move(left), depth + 1, features);
    const int r = grow(tree, rows, g, h, std::move(right), depth + 1, features);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  ClassifierConfig cfg_;
  std::vector<std::vector<Tree>> rounds_;
};

}  // namespace

std::unique_ptr<Classifier> make_random_forest(const ClassifierConfig& cfg) {
  return std::make_unique<RandomForest>(cfg);
}

std::unique_ptr<Classifier> make_gradient_boosted_trees(const ClassifierConfig& cfg) {
  return std::make_unique<GradientBoostedTrees>(cfg);
}

}  // namespace trafficdiff::detail
