#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "unirep/cli.hpp"
#include "unirep/codebook.hpp"
#include "unirep/config.hpp"
#include "unirep/cujp.hpp"
#include "unirep/errors.hpp"
#include "unirep/fcmi.hpp"
#include "unirep/io.hpp"
#include "unirep/metrics.hpp"
#include "unirep/pipeline.hpp"
#include "unirep/synthdata.hpp"

namespace py = pybind11;
using namespace unirep;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

RunConfig config_from(const std::string& text) {
  return text.empty() ? RunConfig{} : RunConfig::from_json(nlohmann::json::parse(text));
}

py::tuple nce_result(const InfoNceResult& r) {
  return py::make_tuple(r.loss, to_array(r.grad_masked), to_array(r.grad_target));
}

}  // namespace

PYBIND11_MODULE(_unirep, m) {
  m.doc() = "Compiled core of the unirep toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  m.def("harmonic_open_set", &harmonic_open_set, py::arg("os_star"), py::arg("unk"));

  m.def(
      "fine_loss",
      [](const FloatArray& masked, const FloatArray& target, double tau, bool normalize) {
        return nce_result(fine_loss(to_tensor(masked), to_tensor(target), tau, normalize));
      },
      py::arg("masked"), py::arg("target"), py::arg("tau") = 1.0, py::arg("normalize") = false);
  m.def(
      "coarse_loss",
      [](const FloatArray& masked, const FloatArray& target, double tau, bool normalize) {
        return nce_result(coarse_loss(to_tensor(masked), to_tensor(target), tau, normalize));
      },
      py::arg("masked"), py::arg("target"), py::arg("tau") = 1.0, py::arg("normalize") = false);

  m.def(
      "quantize",
      [](const FloatArray& codewords, const FloatArray& z) {
        const auto q = Codebook::from_codewords(to_tensor(codewords)).quantize(to_tensor(z));
        return py::make_tuple(q.indices, to_array(q.quantized));
      },
      py::arg("codewords"), py::arg("z"));

  m.def(
      "build_universe",
      [](std::size_t segments, std::size_t count, std::uint64_t seed) {
        Rng rng(seed);
        return build_universe(rng, segments, count).table();
      },
      py::arg("segments"), py::arg("count"), py::arg("seed") = 0);
  m.def("mmjp_universe_bound", &mmjp_universe_bound, py::arg("modalities"), py::arg("splits"),
        py::arg("cap") = 40320);

  m.def("default_config_json", [] { return RunConfig{}.to_json().dump(); });
  m.def("validate_config_json", [](const std::string& text) { config_from(text).validate(); });

  m.def(
      "generate",
      [](const std::string& config_text) {
        const RunConfig c = config_from(config_text);
        c.validate();
        const Dataset d = generate(c.gen_spec());
        py::dict out;
        for (Split s : kAllSplits) {
          const auto& b = d.get(s);
          py::dict split;
          split["x_a"] = to_array(b.x_a);
          split["x_b"] = to_array(b.x_b);
          split["labels"] = b.labels;
          split["sample_ids"] = b.sample_ids;
          out[py::str(to_string(s))] = split;
        }
        out["known"] = d.classes.known;
        out["unknown"] = d.classes.unknown;
        return out;
      },
      py::arg("config_json") = "");

  m.def(
      "run_pipeline",
      [](const std::string& config_text) {
        const RunConfig c = config_from(config_text);
        c.validate();
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(c);
        }
        nlohmann::json log = nlohmann::json::array();
        for (const auto& e : r.pretrain.log) log.push_back(e.to_json());
        return nlohmann::json{{"report", r.report.to_json()}, {"train_log", log}}.dump();
      },
      py::arg("config_json") = "");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
