#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tabpc/cli.hpp"
#include "tabpc/dataset.hpp"
#include "tabpc/error.hpp"
#include "tabpc/metrics.hpp"
#include "tabpc/model.hpp"
#include "tabpc/pipeline.hpp"
#include "tabpc/sample.hpp"

namespace py = pybind11;
using namespace tabpc;

namespace {

struct PyModel {
  ModelBundle bundle;
  double val_bpd = std::nan("");
};

py::dict table_columns(const Table& t) {
  py::dict out;
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    const auto& cs = t.column_schema(c);
    py::list col;
    if (cs.is_categorical()) {
      for (auto code : t.codes(c)) {
        if (code == kMissingCode) {
          col.append(py::none());
        } else {
          col.append(cs.categories[static_cast<std::size_t>(code)]);
        }
      }
    } else {
      for (double v : t.values(c)) col.append(is_missing(v) ? py::object(py::none()) : py::object(py::float_(v)));
    }
    out[py::str(cs.name)] = col;
  }
  return out;
}

Table load_csv(const std::string& path, const std::string& schema_path) {
  if (!schema_path.empty()) return load_table_file(path, load_schema_file(schema_path));
  const RawTable raw = read_csv_file(path);
  return table_from_raw(raw, infer_schema(raw));
}

PyModel fit_py(const Table& train, const Table& val, const std::string& kind, std::size_t units,
               std::uint64_t seed, std::size_t max_epochs, std::size_t batch_size, double learning_rate) {
  FitOptions o;
  o.kind = model_kind_from(kind);
  o.build.units = units;
  o.build.seed = seed;
  o.plan.seed = seed;
  o.train.seed = seed;
  o.train.max_epochs = max_epochs;
  o.train.batch_size = batch_size;
  o.train.learning_rate = learning_rate;
  FitResult r;
  {
    py::gil_scoped_release release;
    r = fit_model(train, val, o);
  }
  return {std::move(r.bundle), r.val_bpd};
}

}  // namespace

PYBIND11_MODULE(_tabpc, m) {
  m.doc() = "Probabilistic-circuit generators for tabular data";

  static py::exception<Error> error(m, "TabpcError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<Table>(m, "Table")
      .def_property_readonly("n_rows", &Table::n_rows)
      .def_property_readonly("n_cols", &Table::n_cols)
      .def_property_readonly("names",
                             [](const Table& t) {
                               std::vector<std::string> names;
                               for (const auto& c : t.schema()) names.push_back(c.name);
                               return names;
                             })
      .def("to_columns", &table_columns, "Columns as lists keyed by name; missing cells are None.")
      .def("to_csv",
           [](const Table& t, const std::string& path) { write_csv_file(path, t); })
      .def("rows",
           [](const Table& t, std::size_t begin, std::size_t end) {
             end = std::min(end, t.n_rows());
             std::vector<std::size_t> idx;
             for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
             return t.select_rows(idx);
           })
      .def("__len__", &Table::n_rows);

  m.def("load_csv", &load_csv, py::arg("path"), py::arg("schema_path") = "",
        "Reads a CSV; the schema is inferred unless a schema file is given.");

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("kind", [](const PyModel& p) { return p.bundle.kind; })
      .def_property_readonly("val_bpd", [](const PyModel& p) { return p.val_bpd; })
      .def_property_readonly("n_params", [](const PyModel& p) { return p.bundle.circuit.n_params(); })
      .def(
          "sample",
          [](const PyModel& p, std::size_t n, std::uint64_t seed) {
            SampleRequest r;
            r.n_rows = n;
            r.seed = seed;
            py::gil_scoped_release release;
            return generate_dataset(p.bundle, r);
          },
          py::arg("n"), py::arg("seed") = 0)
      .def("save", [](const PyModel& p, const std::string& path) { save_model(path, p.bundle); });

  m.def("load_model", [](const std::string& path) { return PyModel{load_model(path)}; });

  m.def("fit", &fit_py, py::arg("train"), py::arg("val"), py::arg("kind") = "tabpc", py::arg("units") = 32,
        py::arg("seed") = 0, py::arg("max_epochs") = 200, py::arg("batch_size") = 512,
        py::arg("learning_rate") = 0.1);

  m.def("shape", [](const Table& r, const Table& s) { return shape(r, s).score; });
  m.def("trend", [](const Table& r, const Table& s) { return trend(r, s).score; });
  m.def("wnmis", [](const Table& r, const Table& s) { return wnmis(r, s).score; });
  m.def(
      "c2st",
      [](const Table& r, const Table& s, const std::string& classifier, std::uint64_t seed) {
        C2stClassifier c;
        if (classifier == "gbt") {
          c = C2stClassifier::gbt;
        } else if (classifier == "logistic") {
          c = C2stClassifier::logistic;
        } else {
          fail(ErrorKind::usage, "classifier must be 'gbt' or 'logistic'");
        }
        py::gil_scoped_release release;
        return tabpc::c2st(r, s, c, seed).score;
      },
      py::arg("real"), py::arg("synth"), py::arg("classifier") = "gbt", py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "tabgen");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "Runs the tabgen command line in-process; returns (exit code, stdout, stderr).");
}
