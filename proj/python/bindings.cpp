#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mscmhmst/checkpoint.hpp"
#include "mscmhmst/cli.hpp"
#include "mscmhmst/errors.hpp"
#include "mscmhmst/evaluation.hpp"
#include "mscmhmst/gradcheck.hpp"
#include "mscmhmst/random.hpp"
#include "mscmhmst/training.hpp"

namespace py = pybind11;
using namespace mscmhmst;

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

FlowSeries to_series(const Array& values) {
  if (values.ndim() != 2) throw ConfigError("series values must be a 2-D [sensors, steps] array");
  FlowSeries s;
  s.values = to_tensor(values);
  for (std::size_t i = 0; i < s.sensors(); ++i) s.sensor_ids.push_back("s" + std::to_string(i));
  return s;
}

ExperimentConfig to_config(const std::map<std::string, std::string>& pairs) {
  ExperimentConfig c;
  for (const auto& [k, v] : pairs) c.set(k, v);
  c.validate();
  return c;
}

std::map<std::string, std::string> from_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : c.to_pairs()) out[k] = v;
  return out;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["mae"] = m.mae;
  d["mse"] = m.mse;
  d["rmse"] = m.rmse;
  d["mape"] = m.mape;
  return d;
}

py::dict history_dict(const TrainHistory& h) {
  py::dict d;
  std::vector<double> train_loss{h.initial_train_loss}, val_loss{h.initial_val_loss}, seconds;
  for (const auto& e : h.epochs) {
    train_loss.push_back(e.train_loss);
    val_loss.push_back(e.val_loss);
    seconds.push_back(e.seconds);
  }
  d["train_loss"] = train_loss;
  d["val_loss"] = val_loss;
  d["seconds"] = seconds;
  d["best_epoch"] = h.best_epoch;
  d["best_val_loss"] = h.best_val_loss;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  for (const auto& h : r.horizons) d[py::int_(h.steps)] = metrics_dict(h.metrics);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-scale convolution and multi-head multi-scale attention traffic forecaster";
  m.attr("__version__") = kToolVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);

  m.def(
      "conv1d_same",
      [](const Array& x, const Array& w, const Array& b) {
        Graph g(false);
        return to_array(conv1d_same(g.constant(to_tensor(x)), g.constant(to_tensor(w)), g.constant(to_tensor(b))).value());
      },
      py::arg("x"), py::arg("weights"), py::arg("bias"),
      "Zero-padded same-length 1-D convolution: x [C_in, L] or [B, C_in, L], weights [C_out, C_in, k].");

  m.def(
      "metrics", [](const Array& y, const Array& yhat) { return metrics_dict(metrics(to_tensor(y), to_tensor(yhat))); },
      py::arg("actual"), py::arg("predicted"), "MAE, MSE, RMSE and MAPE (percent, NaN when every actual is zero).");

  m.def(
      "trimmed_mean_protocol",
      [](const std::vector<double>& runs, std::size_t expected) { return trimmed_mean_protocol(runs, expected); },
      py::arg("runs"), py::arg("expected_runs") = 10,
      "Mean after dropping the 20% of runs with the largest |z-score|.");

  m.def(
      "synthesize", [](std::size_t sensors, std::size_t days, std::uint64_t seed) {
        return to_array(synthesize_series(sensors, days, seed).values);
      },
      py::arg("sensors"), py::arg("days"), py::arg("seed"), "Synthetic flow series, [sensors, 288 * days].");

  m.def(
      "load_series",
      [](const std::filesystem::path& path) {
        const FlowSeries s = load_series(path);
        return py::make_tuple(to_array(s.values), s.sensor_ids);
      },
      py::arg("path"), "Reads a matrix_csv file; returns (values [sensors, steps], sensor ids).");

  m.def(
      "write_series",
      [](const std::filesystem::path& path, const Array& values) { write_series(path, to_series(values)); },
      py::arg("path"), py::arg("values"));

  m.def(
      "normalize_stats",
      [](const Array& values) {
        const NormStats st = normalize_stats(to_series(values));
        return py::make_tuple(to_array(st.mean), to_array(st.std));
      },
      py::arg("values"), "Per-sensor mean and population std (zero std replaced by 1).");

  py::class_<WindowedDataset>(m, "WindowedDataset")
      .def_property_readonly("inputs", [](const WindowedDataset& d) { return to_array(d.inputs); })
      .def_property_readonly("targets", [](const WindowedDataset& d) { return to_array(d.targets); })
      .def_property_readonly("raw_inputs", [](const WindowedDataset& d) { return to_array(d.raw_inputs); })
      .def_property_readonly("raw_targets", [](const WindowedDataset& d) { return to_array(d.raw_targets); })
      .def_readonly("history", &WindowedDataset::history)
      .def_readonly("horizon", &WindowedDataset::horizon)
      .def("__len__", &WindowedDataset::size);

  m.def(
      "make_windows",
      [](const Array& values, std::size_t history, std::size_t horizon, const Array& mean, const Array& std) {
        return make_windows(to_series(values), history, horizon, NormStats{to_tensor(mean), to_tensor(std)});
      },
      py::arg("values"), py::arg("history"), py::arg("horizon"), py::arg("mean"), py::arg("std"));

  py::class_<PreparedData>(m, "PreparedData")
      .def_readonly("train", &PreparedData::train)
      .def_readonly("val", &PreparedData::val)
      .def_readonly("test", &PreparedData::test)
      .def_property_readonly("mean", [](const PreparedData& d) { return to_array(d.stats.mean); })
      .def_property_readonly("std", [](const PreparedData& d) { return to_array(d.stats.std); });

  m.def(
      "prepare",
      [](const std::map<std::string, std::string>& config, const Array& values) {
        ExperimentConfig c = to_config(config);
        c.model.input_channels = static_cast<std::size_t>(values.shape(0));
        return prepare_data(c, to_series(values));
      },
      py::arg("config"), py::arg("values"), "Split, normalize and window a [sensors, steps] series.");

  m.def("config_keys", &config_keys);
  m.def(
      "default_config", [] { return from_config(ExperimentConfig{}); }, "Every config key with its default value.");

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::map<std::string, std::string>& config) { return Model::build(to_config(config).model); }),
           py::arg("config") = std::map<std::string, std::string>{})
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("parameter_names", [](const Model& model) { return model.parameters().names(); })
      .def_property_readonly("layout", [](const Model& model) { return model.layout().describe(); })
      .def("parameter", [](const Model& model, const std::string& name) { return to_array(model.parameters().value(name)); })
      .def(
          "predict", [](const Model& model, const Array& batch) { return to_array(model.predict(to_tensor(batch))); },
          py::arg("batch"), "[B, C_in, history] -> [B, C_in, horizon] in normalized units.")
      .def(
          "train",
          [](Model& model, const PreparedData& data, const std::map<std::string, std::string>& config) {
            const ExperimentConfig c = to_config(config);
            py::gil_scoped_release release;
            const TrainHistory h = train(model, data.train, data.val, c.train);
            py::gil_scoped_acquire acquire;
            return history_dict(h);
          },
          py::arg("data"), py::arg("config") = std::map<std::string, std::string>{},
          "Adam training with best-validation-epoch selection; returns the loss history (entry 0 is untrained).")
      .def(
          "evaluate", [](const Model& model, const WindowedDataset& test) { return report_dict(evaluate_horizons(model, test)); },
          py::arg("test"), "Metrics at 3, 6 and 12 steps on denormalized forecasts.")
      .def(
          "save",
          [](const Model& model, const std::filesystem::path& path, const Array& mean, const Array& std) {
            ExperimentConfig c;
            c.model = model.config();
            save_checkpoint(path, model, c, NormStats{to_tensor(mean), to_tensor(std)}, "python");
          },
          py::arg("path"), py::arg("mean"), py::arg("std"));

  m.def(
      "load_checkpoint", [](const std::filesystem::path& path) { return load_checkpoint(path).model; }, py::arg("path"));

  m.def(
      "naive_report", [](const WindowedDataset& test) {
        EvalReport r;
        r.horizons = horizon_metrics(test.raw_targets, naive_last_value(test));
        return report_dict(r);
      },
      py::arg("test"), "Metrics of the last-value-repeated forecast.");

  m.def(
      "gradcheck",
      [](const std::map<std::string, std::string>& overrides) {
        ExperimentConfig c = gradcheck_default_config();
        for (const auto& [k, v] : overrides) c.set(k, v);
        c.validate();
        Model model = Model::build(c.model);
        Rng rng(derive_seed(c.model.seed, "gradcheck.data"));
        Tensor x({2, c.model.input_channels, c.model.history}), y({2, c.model.input_channels, c.model.horizon});
        for (auto& v : x.data()) v = rng.normal();
        for (auto& v : y.data()) v = rng.normal();
        auto f = [&](Graph& g, ParameterSet&) { return mse_loss(model.forward(g, g.constant(x)), g.constant(y)); };
        const GradcheckResult r = gradcheck(f, model.parameters());
        py::dict d;
        d["max_relative_error"] = r.max_relative_error;
        d["worst_parameter"] = r.worst_parameter;
        d["coordinates_checked"] = r.coordinates_checked;
        return d;
      },
      py::arg("overrides") = std::map<std::string, std::string>{},
      "Central-difference check of the full model on the small default configuration.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit code, stdout, stderr).");
}
