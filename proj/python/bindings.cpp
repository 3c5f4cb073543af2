#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "trafficdiff/diffusion.hpp"
#include "trafficdiff/enhance.hpp"
#include "trafficdiff/fidelity.hpp"
#include "trafficdiff/gasf.hpp"
#include "trafficdiff/harness.hpp"
#include "trafficdiff/pipeline.hpp"
#include "trafficdiff/trace_ingest.hpp"

namespace py = pybind11;
using namespace trafficdiff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

Array to_array(std::span<const double> v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

Array gasf_to_array(const GasfImage& g) {
  const auto n = static_cast<py::ssize_t>(g.size());
  Array out({n, n});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

GasfImage gasf_from_array(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw std::invalid_argument("expected a square 2-D array");
  GasfImage g(static_cast<std::size_t>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), g.data().begin());
  return g;
}

FloatArray image_to_array(const PixelImage& img) {
  FloatArray out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width)});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

PixelImage image_from_array(const FloatArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D image");
  PixelImage img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), PixelStage::kUnit);
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

std::vector<PixelImage> images_from_list(const std::vector<FloatArray>& list) {
  std::vector<PixelImage> out;
  for (const auto& a : list) out.push_back(image_from_array(a));
  return out;
}

GaussianStats stats_from(const Array& mean, const Array& cov) {
  const auto d = static_cast<Eigen::Index>(mean.size());
  if (cov.ndim() != 2 || cov.shape(0) != d || cov.shape(1) != d)
    throw std::invalid_argument("covariance must be d x d for a length-d mean");
  GaussianStats s;
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
  s.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cov.data(), d, d);
  s.count = 2;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Traffic trace synthesis with GASF images and diffusion models";

  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  m.def("minmax_normalize", [](const Array& v) { return to_array(minmax_normalize(to_vector(v))); }, py::arg("values"));
  m.def("fix_length", [](const Array& v, std::size_t n) { return to_array(fix_length(to_vector(v), n)); },
        py::arg("values"), py::arg("target"));
  m.def(
      "bin_trace",
      [](const Array& timestamps, const Array& values, double width) {
        RawTrace r;
        r.timestamps = to_vector(timestamps);
        r.values = to_vector(values);
        return to_array(bin_trace(r, width).values);
      },
      py::arg("timestamps"), py::arg("values"), py::arg("bin_width"));
  m.def(
      "toy_dataset",
      [](int num_classes, int traces_per_class, std::size_t length, std::uint64_t seed) {
        DatasetSpec spec;
        spec.num_classes = num_classes;
        spec.traces_per_class = traces_per_class;
        spec.target_length = length;
        py::list traces;
        for (const auto& r : gen_toy_dataset(spec, seed))
          traces.append(py::make_tuple(to_array(prepare_trace(r, spec).samples), r.class_label));
        return traces;
      },
      py::arg("num_classes") = 2, py::arg("traces_per_class") = 100, py::arg("length") = 128, py::arg("seed") = 0,
      "Normalized toy traces as (samples, label) pairs.");

  m.def("gasf_encode", [](const Array& x) { return gasf_to_array(gasf_encode(to_vector(x))); }, py::arg("samples"));
  m.def(
      "gasf_decode", [](const Array& g, double tol) { return to_array(gasf_decode(gasf_from_array(g), tol)); },
      py::arg("image"), py::arg("tolerance") = 1e-6);
  m.def(
      "crop_prefix", [](const Array& g, std::size_t m) { return gasf_to_array(crop_prefix(gasf_from_array(g), m)); },
      py::arg("image"), py::arg("m"));

  m.def(
      "enhance",
      [](const Array& g, std::size_t resolution, double gamma, double amplitude) {
        return image_to_array(enhance_pipeline(gasf_from_array(g), {resolution, gamma, amplitude}));
      },
      py::arg("image"), py::arg("resolution") = 64, py::arg("gamma") = 0.25, py::arg("amplitude") = 1.0);

  m.def(
      "alpha_bars",
      [](int steps, double beta_start, double beta_end) {
        return to_array(make_schedule(steps, beta_start, beta_end).alpha_bars);
      },
      py::arg("steps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02);

  m.def(
      "embed_images",
      [](const std::vector<FloatArray>& images, const std::string& embedder) {
        const auto rows = embed_images(images_from_list(images), embedder);
        Array out({static_cast<py::ssize_t>(rows.size()),
                   static_cast<py::ssize_t>(rows.empty() ? 0 : rows.front().size())});
        double* dst = out.mutable_data();
        for (const auto& r : rows) dst = std::copy(r.begin(), r.end(), dst);
        return out;
      },
      py::arg("images"), py::arg("embedder") = "pixel");
  m.def(
      "frechet_distance",
      [](const Array& mean_a, const Array& cov_a, const Array& mean_b, const Array& cov_b) {
        return frechet_distance(stats_from(mean_a, cov_a), stats_from(mean_b, cov_b));
      },
      py::arg("mean_a"), py::arg("cov_a"), py::arg("mean_b"), py::arg("cov_b"));
  m.def(
      "image_fid",
      [](const std::vector<FloatArray>& a, const std::vector<FloatArray>& b, const std::string& embedder) {
        const auto sa = gaussian_stats(embed_images(images_from_list(a), embedder));
        const auto sb = gaussian_stats(embed_images(images_from_list(b), embedder));
        return frechet_distance(sa, sb);
      },
      py::arg("a"), py::arg("b"), py::arg("embedder") = "pixel");
  m.def(
      "histogram_compare",
      [](const std::vector<FloatArray>& a, const std::vector<FloatArray>& b, int bins) {
        return histogram_compare(images_from_list(a), images_from_list(b), bins);
      },
      py::arg("a"), py::arg("b"), py::arg("bins") = 32);
  m.def("predictive_entropy", [](const Array& p) { return predictive_entropy(to_vector(p)); }, py::arg("probabilities"));

  std::vector<std::string> stages;
  for (const auto s : kStages) stages.emplace_back(s);
  m.attr("stages") = stages;
  m.def(
      "run_stage",
      [](const std::filesystem::path& config, const std::string& stage, std::optional<std::filesystem::path> root,
         bool force, std::optional<int> count, std::vector<std::string> protocols) {
        const auto cfg = RunConfig::load(config);
        StageOptions opt;
        opt.force = force;
        opt.sample_count = count;
        opt.protocols = std::move(protocols);
        const auto out = run_stage(cfg, stage, resolve_artifact_root(cfg, root), opt);
        py::dict d;
        d["stage"] = out.stage;
        d["skipped"] = out.skipped;
        d["dir"] = out.dir;
        d["manifest_sha256"] = out.manifest_sha256;
        return d;
      },
      py::arg("config"), py::arg("stage"), py::arg("artifact_root") = py::none(), py::arg("force") = false,
      py::arg("count") = py::none(), py::arg("protocols") = std::vector<std::string>{}, "Runs one pipeline stage and returns its outcome.");
}
