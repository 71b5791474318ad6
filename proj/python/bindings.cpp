#include "rlad/active.hpp"
#include "rlad/config.hpp"
#include "rlad/data.hpp"
#include "rlad/env.hpp"
#include "rlad/eval.hpp"
#include "rlad/pipeline.hpp"
#include "rlad/potential.hpp"
#include "rlad/vae.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace rlad;

namespace {

// metrics travel as JSON text; the Python side decodes them
py::object to_python(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

config::RunConfig config_from(const py::object& cfg) {
    if (py::isinstance<py::str>(cfg) || py::hasattr(cfg, "__fspath__")) {
        return config::load(py::str(py::module_::import("os").attr("fspath")(cfg)).cast<std::string>());
    }
    const std::string text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
    return config::from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "RL time-series anomaly detection core";

    static py::exception<Error> base(m, "Error");
    py::register_exception<MissingFile>(m, "MissingFile", base.ptr());
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<InvalidArgs>(m, "InvalidArgs", base.ptr());
    py::register_exception<InvalidSigma>(m, "InvalidSigma", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    py::class_<data::Series>(m, "Series")
        .def_readonly("id", &data::Series::id)
        .def_readonly("values", &data::Series::values)
        .def_readonly("labels", &data::Series::labels)
        .def_readonly("train_end", &data::Series::train_end)
        .def("__len__", &data::Series::length);

    m.def("synth_spike_series",
          [](std::size_t T, std::size_t d, std::size_t n_anomalies, std::uint64_t seed) {
              return data::synth_spike_series(T, d, n_anomalies, seed);
          },
          py::arg("T"), py::arg("d") = 1, py::arg("n_anomalies") = 20, py::arg("seed") = 0);

    m.def("reward_r1", &env::reward_r1, py::arg("action"), py::arg("label"));
    m.def("shaped_reward", &potential::shaped_reward, py::arg("r"), py::arg("phi_s"), py::arg("phi_next"),
          py::arg("gamma"));
    m.def("heuristic_potential",
          [](const Matrix& window) { return potential::heuristic_potential(window).value; }, py::arg("window"));
    m.def("parse_severity", [](const std::string& reply) { return potential::parse_severity(reply).value; },
          py::arg("reply"));

    m.def("update_lambda",
          [](double lambda, double alpha, double r_target, double r_episode, double lambda_min, double lambda_max) {
              return vae::update_lambda({lambda, alpha, r_target, lambda_min, lambda_max}, r_episode).lambda;
          },
          py::arg("lambda_"), py::arg("alpha"), py::arg("r_target"), py::arg("r_episode"), py::arg("lambda_min") = 0.0,
          py::arg("lambda_max") = 2.0);

    m.def("margin", &active::margin, py::arg("q0"), py::arg("q1"));
    m.def("propagate_probabilities", &active::propagate_probabilities, py::arg("labeled"), py::arg("labels"),
          py::arg("unlabeled"), py::arg("sigma"), py::arg("iters") = 50);

    m.def("f1_from", &eval::f1_from, py::arg("precision"), py::arg("recall"));
    m.def("confusion",
          [](const std::vector<int>& pred, const std::vector<int>& truth) {
              const auto c = eval::confusion(pred, truth);
              return py::dict(py::arg("tp") = c.tp, py::arg("fp") = c.fp, py::arg("tn") = c.tn, py::arg("fn") = c.fn);
          },
          py::arg("predictions"), py::arg("labels"));

    m.def("validate_config", [](const py::object& cfg) { return to_python(config::to_json(config_from(cfg))); },
          py::arg("config"));
    m.def("train",
          [](const py::object& cfg, const std::string& output_dir) {
              auto c = config_from(cfg);
              if (!output_dir.empty()) c.output_dir = output_dir;
              pipeline::RunResult r;
              {
                  py::gil_scoped_release release;
                  r = pipeline::run_training(c);
              }
              return to_python(r.metrics);
          },
          py::arg("config"), py::arg("output_dir") = "");
    m.def("evaluate",
          [](const py::object& cfg, const std::string& checkpoint, const std::string& out_dir, const std::string& labels) {
              const auto c = config_from(cfg);
              pipeline::RunResult r;
              {
                  py::gil_scoped_release release;
                  r = pipeline::run_eval(c, checkpoint, out_dir, labels);
              }
              return to_python(r.metrics);
          },
          py::arg("config"), py::arg("checkpoint"), py::arg("out_dir"), py::arg("labels") = "");
}
