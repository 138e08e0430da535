// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "crosspt/backbone.hpp"
#include "crosspt/composer.hpp"
#include "crosspt/errors.hpp"
#include "crosspt/harness.hpp"
#include "crosspt/metrics.hpp"
#include "crosspt/prompt_bank.hpp"
#include "crosspt/taskgen.hpp"

namespace py = pybind11;
using namespace crosspt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

std::vector<Tensor> to_tensors(const std::vector<Array>& arrays) {
  std::vector<Tensor> out;
  for (const Array& a : arrays) out.push_back(to_tensor(a));
  return out;
}

py::tuple sim_tuple(const SimMatrix& s) { return py::make_tuple(s.row_labels, s.col_labels, to_array(s.values)); }

py::dict cell_dict(const CellResult& c) {
  py::dict d;
  d["method"] = c.key.method;
  d["shots"] = c.key.shots;
  d["seed"] = c.key.seed;
  d["dir"] = c.dir;
  d["ok"] = c.ok;
  d["error"] = c.error;
  d["tasks"] = c.task_names;
  d["task_accuracy"] = c.task_accuracy;
  d["mean_accuracy"] = c.mean_accuracy;
  d["weighted_sim"] = c.weighted_sim;
  d["weights"] = c.weights.size() > 0 ? py::object(to_array(c.weights)) : py::none();
  return d;
}

py::list report_list(const RunReport& r) {
  py::list out;
  for (const CellResult& c : r.cells) out.append(cell_dict(c));
  return out;
}

ExperimentConfig config_arg(const py::object& cfg) {
  if (py::isinstance<py::str>(cfg)) return parse_experiment_config(cfg.cast<std::string>());
  return parse_experiment_config(py::module_::import("json").attr("dumps")(cfg).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_crosspt, m) {
  m.doc() = "Cross-task prompt composition on a frozen toy transformer";
  m.attr("__version__") = "0.1.0";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<DomainError>(m, "DomainError", base);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base);
  py::register_exception<ContractError>(m, "ContractError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<LengthError>(m, "LengthError", base);
  py::register_exception<VocabError>(m, "VocabError", base);
  py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<StoreError>(m, "StoreError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<ExportError>(m, "ExportError", base);
  py::register_exception<NormalizationError>(m, "NormalizationError", base);

  py::class_<BackboneConfig>(m, "BackboneConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &BackboneConfig::d_model)
      .def_readwrite("n_layers", &BackboneConfig::n_layers)
      .def_readwrite("n_heads", &BackboneConfig::n_heads)
      .def_readwrite("d_ff", &BackboneConfig::d_ff)
      .def_readwrite("vocab_size", &BackboneConfig::vocab_size)
      .def_readwrite("max_len", &BackboneConfig::max_len)
      .def_readwrite("seed", &BackboneConfig::seed)
      .def("validate", &BackboneConfig::validate)
      .def("parameter_count", &BackboneConfig::parameter_count)
      .def("__eq__", [](const BackboneConfig& a, const BackboneConfig& b) { return a == b; });

  py::class_<FrozenBackbone>(m, "FrozenBackbone")
      .def(py::init<const BackboneConfig&>(), py::arg("config"))
      .def_property_readonly("config", &FrozenBackbone::config)
      .def("parameter_count", &FrozenBackbone::parameter_count)
      .def(
          "forward",
          [](const FrozenBackbone& model, const Array& prompt, const TokenSeq& tokens) {
            return to_array(forward(model, to_tensor(prompt), tokens));
          },
          py::arg("prompt"), py::arg("tokens"), "Logits over the vocabulary for [prompt; tokens].")
      .def(
          "loss_and_prompt_grad",
          [](const FrozenBackbone& model, const Array& prompt, const TokenSeq& tokens, std::size_t label) {
            auto [loss, grad] = loss_and_prompt_grad(model, to_tensor(prompt), tokens, label);
            return py::make_tuple(loss, to_array(grad));
          },
          py::arg("prompt"), py::arg("tokens"), py::arg("label_token"))
      .def("save", &FrozenBackbone::save, py::arg("path"))
      .def_static("load", &FrozenBackbone::load, py::arg("path"))
      .def("__eq__", [](const FrozenBackbone& a, const FrozenBackbone& b) { return bit_equal(a, b); });

  m.def(
      "attention_weights", [](const Array& z, std::size_t M) { return to_array(attention_weights(to_tensor(z), M)); },
      py::arg("z"), py::arg("num_source_prompts"), "softmax(z / tau) with tau = 1 / M.");
  m.def("config_names", &config_names);
  m.def(
      "composition",
      [](const std::string& name) {
        const CompositionConfig c = config_from_name(name);
        py::dict d;
        d["name"] = c.name;
        d["use_source"] = c.use_source;
        d["init_source"] = c.init_source;
        d["learn_source"] = c.learn_source;
        d["use_private"] = c.use_private;
        d["init_private"] = c.init_private;
        d["num_source_prompts"] = c.num_source_prompts;
        d["per_task_sources"] = c.sharing == Sharing::PerTask;
        return d;
      },
      py::arg("name"));

  m.def(
      "cross_task_sim",
      [](const std::vector<Array>& prompts, const std::vector<std::string>& names) {
        return sim_tuple(cross_task_sim(to_tensors(prompts), names));
      },
      py::arg("prompts"), py::arg("names"));
  m.def(
      "target_source_sim",
      [](const std::vector<Array>& targets, const std::vector<std::string>& target_names,
         const std::vector<Array>& slots, const std::vector<std::string>& slot_names) {
        return sim_tuple(target_source_sim(to_tensors(targets), target_names, to_tensors(slots), slot_names));
      },
      py::arg("targets"), py::arg("target_names"), py::arg("slots"), py::arg("slot_names"));
  m.def(
      "weighted_sim_source",
      [](const Array& w, const Array& s) { return weighted_sim_source(to_tensor(w), to_tensor(s)); },
      py::arg("weights"), py::arg("sim"));

  py::enum_<PromptRole>(m, "PromptRole")
      .value("SOURCE", PromptRole::Source)
      .value("PRIVATE", PromptRole::Private)
      .value("TARGET", PromptRole::Target);
  m.def(
      "write_prompt",
      [](const std::string& name, const Array& E, PromptRole role, const std::filesystem::path& path) {
        write_prompt(SoftPrompt{name, role, to_tensor(E)}, path);
      },
      py::arg("name"), py::arg("embeddings"), py::arg("role"), py::arg("path"));
  m.def(
      "read_prompt",
      [](const std::filesystem::path& path) {
        const SoftPrompt p = read_prompt(path);
        return py::make_tuple(p.name, p.role, to_array(p.E));
      },
      py::arg("path"), "Returns (name, role, embeddings).");

  py::class_<LabeledExample>(m, "LabeledExample")
      .def_readonly("tokens", &LabeledExample::tokens)
      .def_readonly("label_token", &LabeledExample::label_token)
      .def_readonly("label_class", &LabeledExample::label_class);
  py::class_<Task>(m, "Task")
      .def_property_readonly("name", [](const Task& t) { return t.spec.name; })
      .def_property_readonly("cluster_id", [](const Task& t) { return t.spec.cluster_id; })
      .def_readonly("train", &Task::train)
      .def_readonly("test", &Task::test)
      .def_readonly("label_tokens", &Task::label_tokens)
      .def(
          "save", [](const Task& t, const std::filesystem::path& path) {
            save_task_file(t, path, task_file_format_from_path(path));
          },
          py::arg("path"));
  m.def(
      "make_family",
      [](std::size_t clusters, std::size_t tasks_per_cluster, std::size_t classes, const std::string& label_scheme,
         bool prefixes, std::size_t pool_size, std::uint64_t seed, const BackboneConfig& backbone) {
        FamilyOptions o;
        o.n_clusters = clusters;
        o.tasks_per_cluster = tasks_per_cluster;
        o.num_classes = classes;
        o.scheme = label_scheme_from_string(label_scheme);
        o.prefixes = prefixes;
        o.pool_size = pool_size;
        o.seed = seed;
        return make_family(o, backbone).tasks;
      },
      py::arg("clusters") = 2, py::arg("tasks_per_cluster") = 2, py::arg("classes") = 2,
      py::arg("label_scheme") = "natural", py::arg("prefixes") = true, py::arg("pool_size") = 512,
      py::arg("seed") = 0, py::arg("backbone") = BackboneConfig{});
  m.def(
      "load_task",
      [](const std::filesystem::path& path, std::size_t vocab_size) {
        return load_task_file(path, task_file_format_from_path(path), vocab_size);
      },
      py::arg("path"), py::arg("vocab_size") = BackboneConfig{}.vocab_size);

  m.def(
      "run_experiment",
      [](const py::object& cfg, std::size_t jobs) {
        const ExperimentConfig c = config_arg(cfg);
        RunReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(c, jobs);
        }
        return report_list(r);
      },
      py::arg("config"), py::arg("jobs") = 1, "Runs the grid of a JSON config (str or dict); one dict per cell.");
  m.def(
      "sweep_sources",
      [](const py::object& cfg, const std::vector<std::size_t>& m_values, std::size_t jobs) {
        const ExperimentConfig c = config_arg(cfg);
        std::vector<RunReport> rs;
        {
          py::gil_scoped_release release;
          rs = sweep_sources(c, m_values, jobs);
        }
        py::dict out;
        for (std::size_t i = 0; i < rs.size(); ++i) out[py::int_(m_values[i])] = report_list(rs[i]);
        return out;
      },
      py::arg("config"), py::arg("m_values"), py::arg("jobs") = 1);
  m.def("inspect_cell", &inspect_cell, py::arg("dir"));
}
