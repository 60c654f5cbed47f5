#include <optional>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "protoalign/bench.hpp"
#include "protoalign/engine.hpp"
#include "protoalign/error.hpp"
#include "protoalign/gradcheck.hpp"
#include "protoalign/model.hpp"
#include "protoalign/pfa_loss.hpp"
#include "protoalign/prototypes.hpp"
#include "protoalign/reports.hpp"
#include "protoalign/run_config.hpp"
#include "protoalign/uncertainty.hpp"

namespace py = pybind11;
using namespace protoalign;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<std::size_t> to_labels(const Labels& y) {
  if (y.ndim() != 1) throw InvalidArgument("expected a 1-D label array");
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(y.shape(0)));
  for (py::ssize_t i = 0; i < y.shape(0); ++i) {
    if (y.data()[i] < 0) throw InvalidArgument("labels must be non-negative");
    out.push_back(static_cast<std::size_t>(y.data()[i]));
  }
  return out;
}

Labels from_labels(const std::vector<std::size_t>& v) {
  Labels out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) out.mutable_data()[i] = static_cast<std::int64_t>(v[i]);
  return out;
}

Mask2D to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D mask");
  Mask2D m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  for (std::size_t k = 0; k < m.cells.size(); ++k) m.cells[k] = a.data()[k] != 0;
  return m;
}

LabeledDataset to_dataset(const Array& x, const Labels& y) {
  LabeledDataset d;
  d.inputs = to_matrix(x);
  d.labels = to_labels(y);
  if (d.labels.size() != d.inputs.rows()) throw InvalidArgument("inputs and labels differ in length");
  return d;
}

py::tuple loss_tuple(const LossResult& r) { return py::make_tuple(r.value, to_array(r.grad_features)); }

PredictionBatch predictions(const Array& probs) { return PredictionBatch::from_probs(to_matrix(probs)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prototype-anchored feature alignment and uncertainty-guided contrastive adaptation";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<InvalidArgument> invalid(m, "InvalidArgument", error.ptr());
  static py::exception<DegenerateInput> degenerate(m, "DegenerateInput", error.ptr());
  static py::exception<UndefinedMetric> undefined(m, "UndefinedMetric", error.ptr());
  static py::exception<FormatError> format(m, "FormatError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(invalid.ptr(), e.what());
    } catch (const DegenerateInput& e) {
      PyErr_SetString(degenerate.ptr(), e.what());
    } catch (const UndefinedMetric& e) {
      PyErr_SetString(undefined.ptr(), e.what());
    } catch (const FormatError& e) {
      PyErr_SetString(format.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  py::class_<PrototypeSet>(m, "PrototypeSet")
      .def(py::init([](const Array& w, std::vector<double> prior, double tau) {
             return PrototypeSet(to_matrix(w), std::move(prior), tau);
           }),
           py::arg("weights"), py::arg("prior"), py::arg("temperature") = 0.1)
      .def_static(
          "uniform",
          [](const Array& w, double tau) { return PrototypeSet::with_uniform_prior(to_matrix(w), tau); },
          py::arg("weights"), py::arg("temperature") = 0.1)
      .def_property_readonly("weights", [](const PrototypeSet& p) { return to_array(p.weights()); })
      .def_property_readonly("prior", &PrototypeSet::prior)
      .def_property_readonly("temperature", &PrototypeSet::temperature)
      .def_property_readonly("num_classes", &PrototypeSet::num_classes)
      .def("with_prior", &PrototypeSet::with_prior, py::arg("prior"));

  m.def("class_probabilities", [](const Array& f, const PrototypeSet& p) {
    return to_array(class_probabilities(to_matrix(f), p));
  });
  m.def("transport_conditional", [](const Array& f, const PrototypeSet& p) {
    return to_array(transport_conditional(to_matrix(f), p).probs);
  });
  m.def(
      "em_prior_update",
      [](const Array& f, const PrototypeSet& p, double rho) { return em_prior_update(to_matrix(f), p, rho); },
      py::arg("features"), py::arg("protos"), py::arg("momentum") = 0.9);
  m.def("t2p_loss", [](const Array& f, const PrototypeSet& p) { return loss_tuple(t2p_loss(to_matrix(f), p)); },
        "(value, gradient w.r.t. features)");
  m.def("p2t_loss", [](const Array& f, const PrototypeSet& p) { return loss_tuple(p2t_loss(to_matrix(f), p)); });
  m.def("pfa_loss", [](const Array& f, const PrototypeSet& p) { return loss_tuple(pfa_loss(to_matrix(f), p)); });

  m.def("class_thresholds", [](const Array& probs, std::vector<double> alpha) {
    return class_thresholds(predictions(probs), alpha);
  });
  m.def("select_queries", [](const Array& probs, std::vector<double> gamma) {
    return select_queries(predictions(probs), gamma);
  });
  m.def(
      "select_negatives",
      [](const Array& probs, std::vector<double> gamma, int low_rank, const std::string& mode) {
        return select_negatives(predictions(probs), gamma, low_rank, parse_threshold_mode(mode));
      },
      py::arg("probs"), py::arg("gamma"), py::arg("low_rank") = 3, py::arg("mode") = "pseudo_label");

  py::class_<Model>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def_static("parse", &parse_checkpoint, py::arg("text"))
      .def("save", [](const Model& model, const std::string& path) { save_checkpoint(model, path); })
      .def("serialize", [](const Model& model) { return serialize_checkpoint(model); })
      .def_readonly("classifier", &Model::classifier)
      .def("features", [](const Model& model, const Array& x) { return to_array(model.features(to_matrix(x))); })
      .def("probabilities",
           [](const Model& model, const Array& x) { return to_array(model.probabilities(to_matrix(x))); })
      .def("predict", [](const Model& model, const Array& x) { return from_labels(model.predict(to_matrix(x))); });

  m.def("config_keys", &run_config_keys);
  m.def("resolved_config", [](const std::string& text) { return resolved_entries(parse_run_config(text)); },
        py::arg("text") = "");

  m.def(
      "generate_domains",
      [](const std::string& config_text, std::optional<std::uint64_t> seed) {
        RunConfig c = parse_run_config(config_text);
        if (seed) c.data.seed = *seed;
        const DomainSplits d = generate_domains(c.data);
        py::dict out;
        for (const auto* s : {&d.source_train, &d.source_eval, &d.target_train, &d.target_eval})
          out[py::str(s->split)] = py::make_tuple(to_array(s->inputs), from_labels(s->labels));
        return out;
      },
      py::arg("config_text") = "", py::arg("seed") = py::none());

  m.def(
      "pretrain",
      [](const Array& x, const Labels& y, const std::string& config_text) {
        const RunConfig c = parse_run_config(config_text);
        auto r = pretrain_source(to_dataset(x, y), c.pretrain);
        return py::make_tuple(std::move(r.model), r.train_accuracy);
      },
      py::arg("inputs"), py::arg("labels"), py::arg("config_text") = "");

  m.def(
      "adapt",
      [](const Model& source, const Array& target, const std::string& config_text, const std::string& stage) {
        const RunConfig c = parse_run_config(config_text);
        AdaptResult r = adapt(source, to_matrix(target), c.adapt, parse_stages(stage));
        Json report;
        report["pfa"] = to_json(r.pfa);
        report["cl"] = to_json(r.cl);
        return py::make_tuple(std::move(r.model), dump(report));
      },
      py::arg("source"), py::arg("target_inputs"), py::arg("config_text") = "", py::arg("stage") = "both");

  m.def("evaluate_json", [](const Model& model, const Array& x, const Labels& y) {
    return dump(to_json(evaluate(model, to_dataset(x, y))));
  });

  m.def("dice", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                   const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
    return dice(to_mask(a), to_mask(b));
  });
  m.def("assd_2d", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                      const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
    return assd_2d(to_mask(a), to_mask(b));
  });

  m.def(
      "gradient_suites",
      [](std::size_t instances, std::uint64_t seed) {
        GradCheckOptions opt;
        opt.instances = instances;
        opt.seed = seed;
        py::list out;
        for (const auto& r : run_gradient_suites(opt)) {
          py::dict d;
          d["suite"] = r.suite;
          d["instances"] = r.instances;
          d["max_rel_error"] = r.max_rel_error;
          d["kink_skips"] = r.kink_skips;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("instances") = 20, py::arg("seed") = GradCheckOptions{}.seed);
}
