// Python bindings: the detector, its statistics, and a few oracles. Images
// cross the boundary as float64 arrays of shape (H, W, C) in [0, 1].

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tdk/calibrate.hpp"
#include "tdk/confidence.hpp"
#include "tdk/detect.hpp"
#include "tdk/external_oracle.hpp"
#include "tdk/mlp.hpp"
#include "tdk/perturb.hpp"
#include "tdk/synthetic.hpp"

namespace py = pybind11;
using namespace tdk;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const Array& a) {
  if (a.ndim() != 3) throw InvalidArgument("image must have shape (height, width, channels)");
  const Shape shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                    static_cast<std::size_t>(a.shape(2))};
  return ImageTensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const ImageTensor& x) {
  const Shape& s = x.shape();
  Array a({s.height, s.width, s.channels});
  std::copy(x.pixels().begin(), x.pixels().end(), a.mutable_data());
  return a;
}

std::vector<ImageTensor> to_images(const Array& batch) {
  if (batch.ndim() != 4) throw InvalidArgument("images must have shape (n, height, width, channels)");
  const Shape shape{static_cast<std::size_t>(batch.shape(1)), static_cast<std::size_t>(batch.shape(2)),
                    static_cast<std::size_t>(batch.shape(3))};
  std::vector<ImageTensor> out;
  const double* p = batch.data();
  for (py::ssize_t i = 0; i < batch.shape(0); ++i, p += shape.size()) {
    out.emplace_back(shape, std::vector<double>(p, p + shape.size()));
  }
  return out;
}

LabeledDataset to_dataset(const Array& images, const std::vector<std::uint32_t>& labels, std::uint32_t classes) {
  auto xs = to_images(images);
  if (xs.size() != labels.size()) throw InvalidArgument("images and labels differ in length");
  std::vector<LabeledItem> items;
  for (std::size_t i = 0; i < xs.size(); ++i) items.push_back({std::move(xs[i]), ClassLabel{labels[i]}});
  return LabeledDataset(std::move(items), classes);
}

// Wraps a Python callable image -> probabilities. Calls are serialized and
// take the GIL, so the C++ side may run on any thread.
class CallableOracle final : public PredictionOracle {
 public:
  CallableOracle(py::function fn, Shape shape, std::uint32_t classes, std::string tag)
      : fn_(std::move(fn)), shape_(shape), classes_(classes), tag_(std::move(tag)) {
    check_shape(shape_);
    if (classes_ < 2) throw InvalidArgument("oracle needs at least two classes");
  }
  ~CallableOracle() override {
    py::gil_scoped_acquire gil;
    fn_ = py::function();
  }

  std::uint32_t class_count() const override { return classes_; }
  Shape input_shape() const override { return shape_; }
  Concurrency concurrency() const override { return Concurrency::SerialOnly; }
  std::string implementation_tag() const override { return tag_; }

  std::vector<double> predict(const ImageTensor& x) const override {
    check_input(*this, x);
    py::gil_scoped_acquire gil;
    std::vector<double> p;
    try {
      p = fn_(to_array(x)).cast<std::vector<double>>();
    } catch (const py::error_already_set& e) {
      throw OracleError(std::string("python oracle: ") + e.what());
    } catch (const py::cast_error& e) {
      throw OracleError(std::string("python oracle must return a sequence of floats: ") + e.what());
    }
    if (p.size() != classes_) {
      throw OracleError("python oracle returned " + std::to_string(p.size()) + " probabilities, expected " +
                        std::to_string(classes_));
    }
    return p;
  }

 private:
  py::function fn_;
  Shape shape_;
  std::uint32_t classes_;
  std::string tag_;
};

py::dict profile_dict(const PredictionProfile& p) {
  py::dict d;
  d["m"] = p.m;
  d["top"] = p.top.index;
  d["p1"] = p.p1;
  d["p2"] = p.p2;
  d["delta"] = p.delta;
  d["counts"] = p.counts;
  return d;
}

}  // namespace

PYBIND11_MODULE(_tdk, m) {
  m.doc() = "Trojan input detection by noise perturbation and a prediction-confidence bound";

  static py::exception<Error> base_error(m, "TdkError", PyExc_RuntimeError);
  static py::exception<FingerprintMismatch> fingerprint_error(m, "FingerprintMismatch", base_error.ptr());
  static py::exception<OracleError> oracle_error(m, "OracleError", base_error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ShapeMismatch& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const FingerprintMismatch& e) {
      fingerprint_error(e.what());
    } catch (const OracleError& e) {
      oracle_error(e.what());
    } catch (const Error& e) {
      base_error(e.what());
    }
  });

  // Statistics.
  m.def("confidence_bound", [](double delta, double sigma, double alpha, double beta) {
    return confidence_bound(delta, sigma, {alpha, beta});
  }, py::arg("delta"), py::arg("sigma"), py::arg("alpha") = 10.0, py::arg("beta") = 0.05);
  m.def("profile", [](const std::vector<std::uint32_t>& labels) {
    std::vector<ClassLabel> l;
    for (auto k : labels) l.push_back(ClassLabel{k});
    return profile_dict(profile(l));
  }, py::arg("labels"), "p1, p2 and delta of a list of predicted labels");
  m.def("clopper_pearson", [](std::size_t successes, std::size_t trials, double confidence) {
    const auto ci = clopper_pearson(successes, trials, confidence);
    return py::make_tuple(ci.low, ci.high);
  }, py::arg("successes"), py::arg("trials"), py::arg("confidence") = 0.95);
  m.def("threshold_for_frr", [](const std::vector<double>& l_values, double frr) {
    return threshold_for_frr(l_values, frr).tau;
  }, py::arg("l_values"), py::arg("frr"));
  m.def("dynamic_sigma", [](const Array& image, double scale, double top_k_fraction, double sigma_min,
                            double sigma_max) {
    return dynamic_sigma(to_image(image), {scale, top_k_fraction, sigma_min, sigma_max});
  }, py::arg("image"), py::arg("scale") = 0.25, py::arg("top_k_fraction") = 0.1, py::arg("sigma_min") = 0.05,
        py::arg("sigma_max") = 1.0);

  m.def("generate_synthetic", [](std::size_t count, std::uint64_t seed, std::uint32_t classes) {
    SyntheticConfig cfg;
    cfg.classes = classes;
    const auto d = generate_synthetic(count, RngStream(seed), cfg);
    const Shape& s = cfg.shape;
    Array images({count, s.height, s.width, s.channels});
    std::vector<std::uint32_t> labels;
    double* out = images.mutable_data();
    for (const auto& it : d.items()) {
      out = std::copy(it.image.pixels().begin(), it.image.pixels().end(), out);
      labels.push_back(it.label.index);
    }
    return py::make_tuple(images, labels);
  }, py::arg("count"), py::arg("seed") = 0, py::arg("classes") = 10,
        "Synthetic 16x16x3 glyph images and their labels");

  // Oracles.
  py::class_<PredictionOracle>(m, "Oracle")
      .def_property_readonly("classes", &PredictionOracle::class_count)
      .def_property_readonly("shape", [](const PredictionOracle& o) {
        const Shape s = o.input_shape();
        return py::make_tuple(s.height, s.width, s.channels);
      })
      .def_property_readonly("fingerprint", [](const PredictionOracle& o) { return oracle_fingerprint(o); })
      .def("predict", [](const PredictionOracle& o, const Array& x) { return o.predict(to_image(x)); });

  py::class_<MlpModel, PredictionOracle>(m, "MlpModel")
      .def_static("load", &MlpModel::load, py::arg("path"))
      .def("save", &MlpModel::save, py::arg("path"))
      .def_property_readonly("hidden", &MlpModel::hidden);

  m.def("train_mlp", [](const Array& images, const std::vector<std::uint32_t>& labels, std::uint32_t classes,
                        std::size_t epochs, std::size_t hidden, std::uint64_t seed) {
    MlpHyper hy;
    hy.epochs = epochs;
    hy.hidden = hidden;
    hy.seed = seed;
    const auto data = to_dataset(images, labels, classes);
    py::gil_scoped_release release;
    return train_mlp(data, hy).model;
  }, py::arg("images"), py::arg("labels"), py::arg("classes") = 10, py::arg("epochs") = 30, py::arg("hidden") = 64,
        py::arg("seed") = 0);

  py::class_<EchoOracle, PredictionOracle>(m, "EchoOracle")
      .def(py::init([](std::tuple<std::size_t, std::size_t, std::size_t> shape, std::uint32_t classes) {
        return EchoOracle({std::get<0>(shape), std::get<1>(shape), std::get<2>(shape)}, classes);
      }), py::arg("shape") = std::make_tuple(16, 16, 3), py::arg("classes") = 10);

  py::class_<ExternalOracle, PredictionOracle>(m, "ExternalOracle")
      .def(py::init<std::vector<std::string>>(), py::arg("argv"),
           "Spawns a process speaking the JSON-lines oracle protocol");

  py::class_<CallableOracle, PredictionOracle>(m, "CallableOracle")
      .def(py::init([](py::function fn, std::tuple<std::size_t, std::size_t, std::size_t> shape,
                       std::uint32_t classes, std::string tag) {
        return std::make_unique<CallableOracle>(std::move(fn), Shape{std::get<0>(shape), std::get<1>(shape),
                                                                     std::get<2>(shape)},
                                                classes, std::move(tag));
      }), py::arg("fn"), py::arg("shape"), py::arg("classes"), py::arg("tag") = "python",
           "Adapts fn(image) -> probabilities; the tag names the model in the oracle fingerprint");

  // Detector.
  py::class_<DetectorConfig>(m, "DetectorConfig")
      .def(py::init<>())
      .def_readwrite("m", &DetectorConfig::m)
      .def_property("alpha", [](const DetectorConfig& c) { return c.bound.alpha; },
                    [](DetectorConfig& c, double v) { c.bound.alpha = v; })
      .def_property("beta", [](const DetectorConfig& c) { return c.bound.beta; },
                    [](DetectorConfig& c, double v) { c.bound.beta = v; })
      .def_property("distribution",
                    [](const DetectorConfig& c) {
                      return c.noise.distribution == NoiseDistribution::Laplacian ? "laplacian" : "gaussian";
                    },
                    [](DetectorConfig& c, const std::string& v) {
                      if (v == "gaussian") c.noise.distribution = NoiseDistribution::Gaussian;
                      else if (v == "laplacian") c.noise.distribution = NoiseDistribution::Laplacian;
                      else throw InvalidArgument("distribution must be 'gaussian' or 'laplacian'");
                    })
      .def_property("scale", [](const DetectorConfig& c) { return c.noise.dynamic.scale; },
                    [](DetectorConfig& c, double v) { c.noise.dynamic.scale = v; })
      .def_property("top_k_fraction", [](const DetectorConfig& c) { return c.noise.dynamic.top_k_fraction; },
                    [](DetectorConfig& c, double v) { c.noise.dynamic.top_k_fraction = v; })
      .def_property("sigma", [](const DetectorConfig& c) { return c.noise.fixed_sigma; },
                    [](DetectorConfig& c, std::optional<double> v) { c.noise.fixed_sigma = v; })
      .def("validate", &DetectorConfig::validate);

  py::class_<CalibrationRecord>(m, "CalibrationRecord")
      .def_static("load", &CalibrationRecord::load, py::arg("path"))
      .def("save", &CalibrationRecord::save, py::arg("path"))
      .def_readonly("tau", &CalibrationRecord::tau)
      .def_readonly("frr_target", &CalibrationRecord::frr_target)
      .def_readonly("l_values", &CalibrationRecord::l_values)
      .def_readonly("detector", &CalibrationRecord::detector)
      .def_readonly("oracle_fingerprint", &CalibrationRecord::oracle_fingerprint)
      .def("rethreshold", [](const CalibrationRecord& r, double frr) { return rethreshold(r, frr); },
           py::arg("frr"))
      .def("__eq__", [](const CalibrationRecord& a, const CalibrationRecord& b) { return a == b; });

  m.def("calibrate", [](const PredictionOracle& oracle, const Array& images, const DetectorConfig& cfg, double frr,
                        std::uint64_t seed, std::size_t jobs) {
    auto xs = to_images(images);
    std::vector<LabeledItem> items;
    for (auto& x : xs) items.push_back({std::move(x), ClassLabel{0}});
    const LabeledDataset benign(std::move(items), oracle.class_count());
    py::gil_scoped_release release;
    return calibrate(oracle, benign, cfg, frr, RngStream(seed), {jobs, {}});
  }, py::arg("oracle"), py::arg("images"), py::arg("config") = DetectorConfig{}, py::arg("frr") = 0.01,
        py::arg("seed") = 0, py::arg("jobs") = 1,
        "Benign L-values of images (n, H, W, C) and the threshold for the target FRR");

  m.def("detect", [](const PredictionOracle& oracle, const CalibrationRecord& record, const Array& image,
                     std::uint64_t seed, std::uint64_t index, bool force) {
    const ImageTensor x = to_image(image);
    Verdict v;
    {
      py::gil_scoped_release release;
      v = detect(oracle, record, x, substream(RngStream(seed), index), {1, force});
    }
    py::dict d;
    d["trojan"] = v.decision == Decision::Trojan;
    d["L"] = v.l_value;
    d["sigma"] = v.sigma;
    d["profile"] = profile_dict(v.profile);
    d["label"] = v.predicted_label ? py::cast(v.predicted_label->index) : py::none();
    d["p1_interval"] = py::make_tuple(v.p1_interval.low, v.p1_interval.high);
    return d;
  }, py::arg("oracle"), py::arg("record"), py::arg("image"), py::arg("seed") = 0, py::arg("index") = 0,
        py::arg("force") = false,
        "Verdict for one image. Input `index` of a session seeded with `seed` matches the CLI's detect");
}
