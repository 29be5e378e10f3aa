// Python surface of the library. Configurations go in as dicts (the same JSON
// the CLI writes into manifests) and results come back as plain objects.
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "tnas/core/errors.hpp"
#include "tnas/core/tape.hpp"
#include "tnas/harness/analysis.hpp"
#include "tnas/harness/benchmark.hpp"
#include "tnas/harness/records.hpp"
#include "tnas/harness/runs.hpp"
#include "tnas/samplers/samplers.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace tnas;

namespace {

json to_cpp(const py::handle& obj) {
  auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(py::str(dumps(obj)).cast<std::string>());
}

py::object to_py(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

DiffArray from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return DiffArray::from(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()), DType::F64);
}

py::array_t<double> to_numpy(const DiffArray& x) {
  std::vector<py::ssize_t> shape(x.shape().begin(), x.shape().end());
  py::array_t<double> out(shape);
  std::copy(x.values().begin(), x.values().end(), out.mutable_data());
  return out;
}

py::list rows_to_py(const std::vector<ResultRecord>& rows) {
  py::list out;
  for (const auto& r : rows) out.append(to_py(to_json(r)));
  return out;
}

py::dict trace_to_py(const SearchTrace& t) {
  py::dict d;
  d["best"] = t.best.to_string();
  d["best_metric"] = t.best_metric;
  py::list ev;
  for (const auto& [a, m] : t.evaluated) ev.append(py::make_tuple(a.to_string(), m));
  d["evaluated"] = ev;
  d["best_so_far"] = t.best_so_far;
  d["generation_best"] = t.generation_best;
  return d;
}

TaskConfig task_of(const py::object& task) { return task.is_none() ? TaskConfig{} : task_from_json(to_cpp(task)); }

// Holds the data alongside the supernet so that forward calls stay cheap.
struct PySupernet {
  TaskConfig task;
  SupernetPtr net;

  explicit PySupernet(const py::object& t) : task(task_of(t)) {
    net = make_factory(task, load_task_data(task))(task.data_seed);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Entangled-supernet architecture search";

  auto base = py::register_exception<Error>(m, "TnasError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<ConsistencyError>(m, "ConsistencyError", base);
  py::register_exception<EvaluationError>(m, "EvaluationError", base);
  py::register_exception<PreconditionError>(m, "PreconditionError", base);
  py::register_exception<DivergenceError>(m, "DivergenceError", base);

  py::class_<PySupernet>(m, "Supernet")
      .def(py::init<const py::object&>(), py::arg("task") = py::none(),
           "Builds the supernet of a task dict (keys as in TaskConfig JSON).")
      .def_property_readonly("mode", [](const PySupernet& s) { return to_string(s.net->mode()); })
      .def_property_readonly("dims",
                             [](const PySupernet& s) {
                               py::list out;
                               for (const auto& d : s.net->spec().dims) out.append(py::make_tuple(d.name, d.choices));
                               return out;
                             })
      .def_property_readonly("cardinality", [](const PySupernet& s) { return s.net->spec().cardinality(); })
      .def("param_count",
           [](const PySupernet& s, const std::optional<std::string>& arch) {
             return arch ? s.net->param_count(Architecture::parse(*arch)) : s.net->param_count();
           },
           py::arg("arch") = py::none())
      .def("largest", [](const PySupernet& s) { return Architecture::largest(s.net->spec()).to_string(); })
      .def("from_ordinal",
           [](const PySupernet& s, std::int64_t o) { return Architecture::from_ordinal(s.net->spec(), o).to_string(); })
      .def("forward_path",
           [](const PySupernet& s, const std::string& arch,
              const py::array_t<double, py::array::c_style | py::array::forcecast>& images) {
             Batch b;
             b.inputs = from_numpy(images);
             b.batch = b.inputs.dim(0);
             const auto a = Architecture::parse(arch);
             a.validate(s.net->spec());
             NoGradScope no_grad;
             return to_numpy(s.net->forward_path(b, a));
           },
           py::arg("arch"), py::arg("images"), "Logits of one path for an image batch [N,C,H,W].")
      .def("memory", [](const PySupernet& s) { return to_py(to_json(memory_account(*s.net))); });

  m.def("linear_cka",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& y) {
          return linear_cka(from_numpy(x), from_numpy(y));
        },
        py::arg("x"), py::arg("y"));

  m.def("sample",
        [](const std::vector<double>& alpha, const std::string& strategy, double tau, std::uint64_t seed) {
          Rng rng(seed);
          const auto a = DiffArray::from({static_cast<std::int64_t>(alpha.size())}, alpha, DType::F64);
          NoGradScope no_grad;
          DiffArray w;
          switch (parse_strategy(strategy)) {
            case SamplerStrategy::Softmax: w = sample_softmax(a, tau); break;
            case SamplerStrategy::GumbelST: w = sample_gumbel_st(a, tau, rng); break;
            case SamplerStrategy::Dirichlet: w = sample_dirichlet(a, rng); break;
          }
          return std::vector<double>(w.values().begin(), w.values().end());
        },
        py::arg("alpha"), py::arg("strategy") = "softmax", py::arg("tau") = 1.0, py::arg("seed") = 0);

  m.def("run_search",
        [](const py::object& config, const std::optional<std::string>& out, const std::string& checkpoint) {
          const auto cfg = search_config_from_json(config.is_none() ? json::object() : to_cpp(config));
          std::optional<ResultWriter> writer;
          if (out) writer.emplace(*out);
          SearchRunResult r;
          {
            py::gil_scoped_release release;
            r = run_search(cfg, writer ? &*writer : nullptr, checkpoint);
          }
          py::dict d;
          d["arch"] = r.arch.to_string();
          d["alphas"] = r.alphas;
          d["rows"] = rows_to_py(r.rows);
          return d;
        },
        py::arg("config") = py::none(), py::arg("out") = py::none(), py::arg("checkpoint") = "",
        "Bi-level search; config keys as in the search manifest.");

  m.def("search_config",
        [](const py::object& config) {
          auto cfg = search_config_from_json(config.is_none() ? json::object() : to_cpp(config));
          apply_optimizer(cfg);
          return to_py(to_json(cfg));
        },
        py::arg("config") = py::none(), "Fully resolved search config.");

  m.def("evolutionary_search",
        [](const py::object& task, const std::function<double(const std::string&)>& metric,
           std::int64_t population, std::int64_t generations, std::int64_t max_evaluations, std::uint64_t seed) {
          const PySupernet s(task);
          EvolutionConfig cfg;
          cfg.population = population;
          cfg.generations = generations;
          cfg.max_evaluations = max_evaluations;
          cfg.seed = seed;
          return trace_to_py(
              evolutionary_search(s.net->spec(), [&](const Architecture& a) { return metric(a.to_string()); }, cfg));
        },
        py::arg("task"), py::arg("metric"), py::arg("population") = 20, py::arg("generations") = 10,
        py::arg("max_evaluations") = 0, py::arg("seed") = 0);

  m.def("random_search",
        [](const py::object& task, const std::function<double(const std::string&)>& metric, std::int64_t samples,
           std::uint64_t seed) {
          const PySupernet s(task);
          return trace_to_py(
              random_search(s.net->spec(), [&](const Architecture& a) { return metric(a.to_string()); }, samples, seed));
        },
        py::arg("task"), py::arg("metric"), py::arg("samples") = 100, py::arg("seed") = 0);

  py::class_<BenchmarkTable>(m, "BenchmarkTable")
      .def_static("load", &BenchmarkTable::load)
      .def_property_readonly("space", &BenchmarkTable::space)
      .def_property_readonly("rows", &BenchmarkTable::rows)
      .def_property_readonly("architectures", &BenchmarkTable::architectures)
      .def("mean_val", [](const BenchmarkTable& t, const std::string& a) { return t.mean_val(Architecture::parse(a)); })
      .def("mean_test", [](const BenchmarkTable& t, const std::string& a) { return t.mean_test(Architecture::parse(a)); })
      .def("best", &BenchmarkTable::best)
      .def("optimum", [](const BenchmarkTable& t) {
        std::vector<std::string> out;
        for (const auto& a : t.optimum()) out.push_back(a.to_string());
        return out;
      });

  m.def("read_results", [](const std::string& path) { return rows_to_py(read_results(path)); }, py::arg("path"));
  m.def("code_hash", &code_hash);
}
