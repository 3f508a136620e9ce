#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cebm/checkpoint.hpp"
#include "cebm/commands.hpp"
#include "cebm/config.hpp"
#include "cebm/data.hpp"
#include "cebm/errors.hpp"
#include "cebm/eval.hpp"
#include "cebm/expfam.hpp"
#include "cebm/model.hpp"

namespace py = pybind11;
using namespace cebm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

class PyModel {
 public:
  explicit PyModel(std::unique_ptr<model::EnergyModel> m) : m_(std::move(m)) {}

  std::string kind() const { return model::to_string(m_->kind()); }
  Array energies(const Array& x) const { return to_array(m_->energies(m_->as_batch(to_tensor(x)))); }
  Array representation(const Array& x) const { return to_array(m_->representation(m_->as_batch(to_tensor(x)))); }
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& e : m_->params()) out.push_back(e.name);
    return out;
  }
  Array parameter(const std::string& name) const { return to_array(m_->params().value(name)); }

 private:
  std::unique_ptr<model::EnergyModel> m_;
};

int run_with_stderr(const std::function<int(std::ostream&)>& fn) {
  std::ostringstream err;
  const int code = fn(err);
  if (!err.str().empty()) py::module_::import("sys").attr("stderr").attr("write")(err.str());
  return code;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conjugate energy-based models";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_FloatingPointError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  m.def("log_normalizer_b",
        [](const std::vector<double>& lam1, const std::vector<double>& lam2) {
          return expfam::log_normalizer_b(lam1, lam2);
        },
        py::arg("lam1"), py::arg("lam2"));
  m.def("natural_to_mean", [](const std::vector<double>& lam1, const std::vector<double>& lam2) {
    const auto mp = expfam::natural_to_mean(expfam::GaussianNaturalParams(lam1, lam2));
    return py::make_tuple(mp.m1(), mp.m2());
  });
  m.def("mean_to_natural", [](const std::vector<double>& m1, const std::vector<double>& m2) {
    const auto np = expfam::mean_to_natural(expfam::GaussianMeanParams(m1, m2));
    return py::make_tuple(np.lam1(), np.lam2());
  });
  m.def("gaussian_log_density",
        [](const std::vector<double>& lam1, const std::vector<double>& lam2, const std::vector<double>& z,
           const std::string& route) {
          const auto r = route == "bregman" ? expfam::DensityRoute::bregman : expfam::DensityRoute::canonical;
          return expfam::log_density(expfam::GaussianNaturalParams(lam1, lam2), z, r);
        },
        py::arg("lam1"), py::arg("lam2"), py::arg("z"), py::arg("route") = "canonical");

  m.def("auroc", [](const std::vector<double>& pos, const std::vector<double>& neg) { return eval::auroc(pos, neg); },
        py::arg("pos_scores"), py::arg("neg_scores"));
  m.def("knn_same_class_fraction",
        [](const Array& codes, const std::vector<int>& labels, std::size_t k) {
          eval::EncodedSet set{to_tensor(codes), labels, "python"};
          return eval::knn_report(set, k).same_class_fraction;
        },
        py::arg("codes"), py::arg("labels"), py::arg("k") = 1);

  m.def("gen_synthetic",
        [](const std::string& kind, std::size_t n_per_class, std::size_t image_size, std::size_t num_classes,
           double pixel_noise, double jitter, std::uint64_t seed) {
          data::SyntheticSpec spec;
          spec.n_per_class = n_per_class;
          spec.image_size = image_size;
          spec.num_classes = num_classes;
          spec.pixel_noise = pixel_noise;
          spec.jitter = jitter;
          Rng rng(seed);
          const auto ds = data::gen_synthetic(data::synthetic_kind_from_string(kind), spec, rng);
          return py::make_tuple(to_array(ds.images()), ds.labels());
        },
        py::arg("kind") = "bar_patterns", py::arg("n_per_class") = 100, py::arg("image_size") = 12,
        py::arg("num_classes") = 4, py::arg("pixel_noise") = 0.0, py::arg("jitter") = 0.0, py::arg("seed") = 0);

  m.def("echo_config", [](const std::string& text) { return config::echo_config(config::parse_config(text)); },
        py::arg("text"), "Parse an INI run configuration and return it with every default filled in.");

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("kind", &PyModel::kind)
      .def("energies", &PyModel::energies, py::arg("x"))
      .def("representation", &PyModel::representation, py::arg("x"))
      .def("parameter_names", &PyModel::parameter_names)
      .def("parameter", &PyModel::parameter, py::arg("name"));

  m.def("load_model", [](const std::string& path) { return PyModel(cli::load_model(path)); }, py::arg("path"));
  m.def("build_model",
        [](const std::string& config_text, std::uint64_t seed) {
          Rng rng(seed);
          return PyModel(cli::build_model(config::parse_config(config_text), rng));
        },
        py::arg("config_text"), py::arg("seed") = 0);

  m.def("train", [](const std::string& config) { return run_with_stderr([&](std::ostream& e) { return cli::cmd_train(config, e); }); },
        py::arg("config"), "Run `cebm train`; returns the process exit code.");
  m.def("sample",
        [](const std::string& ckpt, const std::string& out, std::size_t steps, std::size_t count, std::uint64_t seed) {
          cli::SampleOptions opts{ckpt, steps, count, out, seed};
          return run_with_stderr([&](std::ostream& e) { return cli::cmd_sample(opts, e); });
        },
        py::arg("ckpt"), py::arg("out"), py::arg("steps") = 500, py::arg("count") = 16, py::arg("seed") = 0);
  m.def("evaluate",
        [](const std::string& ckpt, const std::string& config, const std::vector<std::string>& metrics) {
          return run_with_stderr([&](std::ostream& e) { return cli::cmd_eval(ckpt, config, metrics, e); });
        },
        py::arg("ckpt"), py::arg("config"), py::arg("metrics") = std::vector<std::string>{});
}
