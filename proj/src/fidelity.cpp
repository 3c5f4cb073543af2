#include "trafficdiff/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "trafficdiff/nn/layers.hpp"

namespace trafficdiff {

namespace {

constexpr std::uint64_t kConvEmbedderSeed = 0x5eed'f1d0'c0de'2024ULL;

// Frozen random-feature network; weights depend only on kConvEmbedderSeed.
class ConvEmbedder {
 public:
  ConvEmbedder()
      : c1_("embed.c1", 1, 16, 3, 3), c2_("embed.c2", 16, 32, 3, 3), c3_("embed.c3", 32, 32, 3, 3) {
    std::mt19937_64 rng(kConvEmbedderSeed);
    c1_.init(rng);
    c2_.init(rng);
    c3_.init(rng);
  }

  std::vector<double> operator()(const PixelImage& image) {
    const auto small = resize_area(image, 32, 32);
    nn::Tensor<float> x(1, 1, 32, 32);
    std::copy(small.pixels.begin(), small.pixels.end(), x.data.begin());
    x = nn::avg_pool(relu_.forward(c1_.forward(x)), 2, 2);
    x = nn::avg_pool(relu_.forward(c2_.forward(x)), 2, 2);
    x = nn::avg_pool(relu_.forward(c3_.forward(x)), 4, 4);
    return {x.data.begin(), x.data.end()};
  }

 private:
  nn::Conv2d<float> c1_, c2_, c3_;
  nn::ReLU<float> relu_;
};

void check_embedder(const std::string& id) {
  if (id != "pixel" && id != "convnet") throw std::invalid_argument("unknown embedder '" + id + "'");
}

}  // namespace

std::size_t embedding_dim(const std::string& embedder_id) {
  check_embedder(embedder_id);
  return embedder_id == "pixel" ? 64 : 128;
}

std::vector<std::vector<double>> embed_images(std::span<const PixelImage> images, const std::string& embedder_id) {
  check_embedder(embedder_id);
  if (!images.empty()) {
    const auto h = images.front().height, w = images.front().width;
    for (const auto& img : images)
      if (img.height != h || img.width != w) throw std::invalid_argument("embed_images: images differ in size");
  }
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  if (embedder_id == "pixel") {
    for (const auto& img : images) {
      const auto small = resize_area(img, 8, 8);
      out.emplace_back(small.pixels.begin(), small.pixels.end());
    }
  } else {
    ConvEmbedder net;
    for (const auto& img : images) out.push_back(net(img));
  }
  return out;
}

GaussianStats gaussian_stats(std::span<const std::vector<double>> vectors) {
  if (vectors.size() < 2) throw std::invalid_argument("gaussian_stats needs at least 2 vectors");
  const auto d = static_cast<Eigen::Index>(vectors.front().size());
  Eigen::MatrixXd data(static_cast<Eigen::Index>(vectors.size()), d);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (static_cast<Eigen::Index>(vectors[i].size()) != d)
      throw std::invalid_argument("gaussian_stats: vectors differ in dimension");
    data.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(vectors[i].data(), d);
  }
  GaussianStats stats;
  stats.count = vectors.size();
  stats.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - stats.mean.transpose();
  stats.covariance = (centered.transpose() * centered) / static_cast<double>(vectors.size() - 1);
  stats.covariance = (0.5 * (stats.covariance + stats.covariance.transpose())).eval();
  return stats;
}

namespace {

constexpr double kEigenClamp = 1e-10;

Eigen::VectorXd clamped_eigenvalues(const Eigen::MatrixXd& sym, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = solver.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < 0.0) {
      if (ev[i] < -kEigenClamp * scale) {
        std::ostringstream msg;
        msg << "matrix square root failed for " << what << ": eigenvalue " << ev[i] << " vs max |" << scale << "|";
        throw std::runtime_error(msg.str());
      }
      ev[i] = 0.0;
    }
  }
  return ev;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed for covariance");
  const Eigen::VectorXd ev = clamped_eigenvalues(sym, "covariance");
  return solver.eigenvectors() * ev.cwiseSqrt().asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd sqrt_a = psd_sqrt(a.covariance);
  const Eigen::MatrixXd inner = sqrt_a * b.covariance * sqrt_a;
  const Eigen::VectorXd ev = clamped_eigenvalues(0.5 * (inner + inner.transpose()), "covariance product");
  const double tr_sqrt = ev.cwiseSqrt().sum();
  return mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
}

void summarize(FidReport& report) {
  if (report.per_class.empty()) {
    report.mean = report.stddev = 0.0;
    return;
  }
  double sum = 0.0;
  for (const auto& c : report.per_class) sum += c.fid;
  report.mean = sum / static_cast<double>(report.per_class.size());
  double sq = 0.0;
  for (const auto& c : report.per_class) sq += (c.fid - report.mean) * (c.fid - report.mean);
  report.stddev = std::sqrt(sq / static_cast<double>(report.per_class.size()));
}

FidReport fid_per_class(std::span<const PixelImage> original, std::span<const PixelImage> synthetic, std::size_t n,
                        const std::string& embedder_id, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> orig_by_class, synth_by_class;
  for (std::size_t i = 0; i < original.size(); ++i) orig_by_class[original[i].provenance.class_label].push_back(i);
  for (std::size_t i = 0; i < synthetic.size(); ++i) synth_by_class[synthetic[i].provenance.class_label].push_back(i);
  for (const auto& [label, _] : orig_by_class)
    if (!synth_by_class.count(label))
      throw std::invalid_argument("fid_per_class: class " + std::to_string(label) + " missing from synthetic set");
  for (const auto& [label, _] : synth_by_class)
    if (!orig_by_class.count(label))
      throw std::invalid_argument("fid_per_class: class " + std::to_string(label) + " missing from original set");

  const auto orig_emb = embed_images(original, embedder_id);
  const auto synth_emb = embed_images(synthetic, embedder_id);

  FidReport report;
  report.embedder_id = embedder_id;
  if (!original.empty()) report.dataset_id = original.front().provenance.dataset_id;
  std::mt19937_64 rng(seed);
  for (const auto& [label, orig_idx] : orig_by_class) {
    auto synth_idx = synth_by_class[label];
    if (synth_idx.size() < n)
      throw std::invalid_argument("fid_per_class: class " + std::to_string(label) + " has fewer than n synthetic images");
    if (orig_idx.size() < 2)
      throw std::invalid_argument("fid_per_class: class " + std::to_string(label) + " has fewer than 2 originals");
    std::shuffle(synth_idx.begin(), synth_idx.end(), rng);
    synth_idx.resize(n);
    std::sort(synth_idx.begin(), synth_idx.end());

    std::vector<std::vector<double>> o, s;
    for (auto i : orig_idx) o.push_back(orig_emb[i]);
    for (auto i : synth_idx) s.push_back(synth_emb[i]);
    report.per_class.push_back({label, frechet_distance(gaussian_stats(o), gaussian_stats(s)), s.size(), o.size()});
  }
  summarize(report);
  return report;
}

std::vector<double> pixel_histogram(std::span<const PixelImage> images, int bins) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  if (images.empty()) throw std::invalid_argument("histogram of an empty image set");
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  std::size_t total = 0;
  for (const auto& img : images)
    for (float p : img.pixels) {
      const int b = std::clamp(static_cast<int>(std::floor(static_cast<double>(p) * bins)), 0, bins - 1);
      h[static_cast<std::size_t>(b)] += 1.0;
      ++total;
    }
  for (double& v : h) v /= static_cast<double>(total);
  return h;
}

double histogram_compare(std::span<const PixelImage> original, std::span<const PixelImage> synthetic, int bins) {
  const auto ho = pixel_histogram(original, bins);
  const auto hs = pixel_histogram(synthetic, bins);
  double overlap = 0.0;
  for (std::size_t i = 0; i < ho.size(); ++i) overlap += std::min(ho[i], hs[i]);
  return std::clamp(overlap, 0.0, 1.0);
}

}  // namespace trafficdiff
