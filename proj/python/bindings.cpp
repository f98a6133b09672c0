// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "robustkit/config.hpp"
#include "robustkit/numerics.hpp"
#include "robustkit/serialize.hpp"
#include "robustkit/trainer.hpp"

namespace py = pybind11;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using I64Array = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

rk::Tensor to_tensor(const F32Array& a) {
  rk::Shape shape(a.shape(), a.shape() + a.ndim());
  return rk::Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

F32Array to_array(const rk::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  F32Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const I64Array& a) { return {a.data(), a.data() + a.size()}; }

rk::Dataset to_dataset(const F32Array& images, const I64Array& labels, std::size_t num_classes) {
  rk::Dataset ds;
  ds.images = to_tensor(images);
  ds.labels = to_labels(labels);
  ds.num_classes = num_classes;
  ds.validate();
  return ds;
}

py::dict report_dict(const rk::EpochReport& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["lr"] = r.lr;
  d["ce"] = r.ce;
  d["js_aug"] = r.js_aug;
  d["js_adv"] = r.js_adv;
  d["total"] = r.total;
  d["train_top1"] = r.train_top1;
  d["wall_ms"] = r.wall_ms;
  return d;
}

rk::EvalOptions eval_options(double eps, double step, std::uint64_t seed) {
  rk::EvalOptions o;
  o.eps = eps;
  o.step = step;
  o.seed = seed;
  return o;
}

}  // namespace

PYBIND11_MODULE(_robustkit, m) {
  m.doc() = "robustkit native core";
  m.attr("__version__") = rk::kToolkitVersion;

  py::register_exception<rk::DivergedError>(m, "DivergedError", PyExc_RuntimeError);
  py::register_exception<rk::FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<rk::LayerStack>(m, "Model")
      .def_property_readonly("architecture", [](const rk::LayerStack& s) { return s.architecture().describe(); })
      .def_property_readonly("num_params", &rk::LayerStack::num_params)
      .def("forward", [](const rk::LayerStack& s, const F32Array& x) { return to_array(s.forward(to_tensor(x), nullptr)); })
      .def("to_bytes", [](const rk::LayerStack& s) {
        const auto b = rk::save_checkpoint(s);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def_static("from_bytes", [](const py::bytes& data) {
        const std::string s = data;
        return rk::load_checkpoint(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      })
      .def_static("init", [](const std::string& arch, rk::Shape input_shape, std::size_t num_classes,
                             std::uint64_t seed) {
        rk::Rng rng(seed);
        return rk::LayerStack::kaiming(rk::resolve_architecture(arch, input_shape, num_classes), rng);
      }, py::arg("arch"), py::arg("input_shape"), py::arg("num_classes"), py::arg("seed") = 0);

  m.def("make_shapes_dataset", [](std::size_t n, std::size_t classes, std::size_t size, std::uint64_t seed) {
    const rk::Dataset ds = rk::make_shapes_dataset(n, classes, size, seed);
    I64Array labels(static_cast<py::ssize_t>(ds.size()));
    std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
    return py::make_tuple(to_array(ds.images), labels);
  }, py::arg("n") = 300, py::arg("classes") = 3, py::arg("size") = 16, py::arg("seed") = 0);

  m.def("softmax", [](const F32Array& z) { return to_array(rk::softmax(to_tensor(z))); });
  m.def("js_divergence_probs", [](const F32Array& p, const F32Array& q) {
    const auto to_d = [](const F32Array& a) {
      return rk::TensorD(rk::Shape(a.shape(), a.shape() + a.ndim()), std::vector<double>(a.data(), a.data() + a.size()));
    };
    return rk::js_divergence_probs(to_d(p), to_d(q));
  });

  m.def("normalize_config", [](const std::string& json) { return rk::config_to_json(rk::parse_config(json)); },
        "Parses a JSON config and returns it with every default materialized.");

  m.def("train", [](const F32Array& images, const I64Array& labels, std::size_t num_classes, const std::string& config) {
    const rk::Dataset ds = to_dataset(images, labels, num_classes);
    const rk::TrainConfig cfg = rk::parse_config(config);
    rk::TrainResult r;
    {
      py::gil_scoped_release release;
      r = rk::train(ds, cfg);
    }
    py::list reports;
    for (const auto& rep : r.reports) reports.append(report_dict(rep));
    return py::make_tuple(std::move(r.model), reports);
  }, py::arg("images"), py::arg("labels"), py::arg("num_classes"), py::arg("config") = "{}");

  m.def("clean_accuracy", [](const rk::LayerStack& model, const F32Array& images, const I64Array& labels) {
    return rk::clean_accuracy(model, to_dataset(images, labels, model.architecture().num_classes()));
  });

  m.def("robust_accuracy", [](const rk::LayerStack& model, const F32Array& images, const I64Array& labels,
                              const std::string& method, int iters, double eps, double step, std::uint64_t seed) {
    return rk::robust_accuracy(model, to_dataset(images, labels, model.architecture().num_classes()),
                               rk::parse_attack_method(method), iters, eval_options(eps, step, seed));
  }, py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("method") = "pgd", py::arg("iters") = 20,
     py::arg("eps") = 0.031, py::arg("step") = 0.003, py::arg("seed") = 0);

  m.def("pgd_attack", [](const rk::LayerStack& model, const F32Array& x, const I64Array& labels, double eps,
                         double step, int iters, bool random_start, std::uint64_t seed) {
    rk::AttackSpec s;
    s.eps = eps;
    s.step = step;
    s.iters = iters;
    s.random_start = random_start;
    rk::Rng rng(seed);
    const auto y = to_labels(labels);
    return to_array(rk::pgd_attack(model, to_tensor(x), rk::one_hot(y, model.architecture().num_classes()), s, rng));
  }, py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("eps") = 0.031, py::arg("step") = 0.003,
     py::arg("iters") = 20, py::arg("random_start") = true, py::arg("seed") = 0);

  m.def("fgsm_attack", [](const rk::LayerStack& model, const F32Array& x, const I64Array& labels, double eps) {
    const auto y = to_labels(labels);
    return to_array(rk::fgsm_attack(model, to_tensor(x), rk::one_hot(y, model.architecture().num_classes()), eps));
  }, py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("eps") = 0.031);

  m.def("evaluate_all", [](const rk::LayerStack& model, const F32Array& images, const I64Array& labels,
                           std::uint64_t seed) {
    const rk::RobustnessSummary s = rk::evaluate_all(
        model, to_dataset(images, labels, model.architecture().num_classes()), eval_options(0.031, 0.003, seed));
    py::dict d;
    d["clean"] = s.clean;
    d["fgsm"] = s.fgsm;
    d["pgd10"] = s.pgd10;
    d["pgd20"] = s.pgd20;
    d["cw20"] = s.cw20;
    d["corr"] = s.corr;
    d["occ_untargeted"] = s.occ_untargeted;
    d["occ_targeted"] = s.occ_targeted;
    d["occ"] = s.occ;
    return d;
  }, py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("seed") = 0);

  m.def("corrupt", [](const F32Array& img, const std::string& kind, int severity, std::uint64_t seed) {
    rk::Rng rng(seed);
    return to_array(rk::corrupt(to_tensor(img), {rk::parse_corruption(kind), severity, std::nullopt}, rng));
  }, py::arg("image"), py::arg("kind"), py::arg("severity") = 1, py::arg("seed") = 0);

  m.def("augment_and_mix", [](const F32Array& img, std::uint64_t seed) {
    rk::Rng rng(seed);
    return to_array(rk::augment_and_mix(to_tensor(img), rk::AugmentConfig{}, rng));
  }, py::arg("image"), py::arg("seed") = 0);

  m.def("fmix_mask", [](std::size_t h, std::size_t w, double gamma, double decay, std::uint64_t seed) {
    rk::Rng rng(seed);
    const rk::FMixMask mask = rk::fmix_mask(h, w, gamma, decay, rng);
    return py::make_tuple(to_array(mask.mask), mask.gamma);
  }, py::arg("height"), py::arg("width"), py::arg("gamma") = 0.5, py::arg("decay") = 3.0, py::arg("seed") = 0);
}
