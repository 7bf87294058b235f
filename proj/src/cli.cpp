#include "mscmhmst/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mscmhmst/checkpoint.hpp"
#include "mscmhmst/errors.hpp"
#include "mscmhmst/evaluation.hpp"
#include "mscmhmst/gradcheck.hpp"
#include "mscmhmst/random.hpp"
#include "mscmhmst/training.hpp"

namespace fs = std::filesystem;

namespace mscmhmst {

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["tool"] = "mscmhmst";
  j["tool_version"] = tool_version;
  j["command"] = command;
  nlohmann::json cfg = nlohmann::json::array();
  for (const auto& [k, v] : config.to_pairs()) cfg.push_back({k, v});
  j["config"] = cfg;
  j["dataset_fingerprint"] = dataset_fingerprint;
  j["variants"] = variants;
  j["seeds"] = seeds;
  j["artifacts"] = artifacts;
  return j.dump(2) + "\n";
}

std::string RunManifest::hash() const { return hex64(fnv1a(to_json())); }

SplitSteps resolve_split(const std::string& split, std::size_t steps) {
  if (split == "auto") return fractional_split(steps);
  if (split == "pems04") return kPems04Split;
  if (split == "pems08") return kPems08Split;
  SplitSteps s;
  char sep1 = 0, sep2 = 0;
  std::istringstream in(split);
  if (!(in >> s.train >> sep1 >> s.val >> sep2 >> s.test) || sep1 != '/' || sep2 != '/') {
    throw ConfigError("cannot parse split '" + split + "'");
  }
  return s;
}

PreparedData prepare_data(const ExperimentConfig& config, const FlowSeries& series) {
  PreparedData d;
  d.series = select_sensors(series, config.sensors);
  d.split = resolve_split(config.split, d.series.steps());
  auto segments = split_series(d.series, d.split);
  d.stats = normalize_stats(segments[0]);
  const std::size_t h = config.model.history, t = config.model.horizon;
  d.train = make_windows(segments[0], h, t, d.stats);
  d.val = make_windows(segments[1], h, t, d.stats);
  d.test = make_windows(segments[2], h, t, d.stats);
  return d;
}

ExperimentConfig gradcheck_default_config() {
  ExperimentConfig cfg;
  cfg.set("variant", "MSCMHMST");
  cfg.set("head_specs", "1,3;3,5");
  cfg.set("branch_channels", "2");
  cfg.set("encoder_layers", "1");
  cfg.set("encoder_heads", "2");
  cfg.set("d_model", "8");
  cfg.set("fc_hidden", "16");
  cfg.set("history", "12");
  cfg.set("horizon", "6");
  cfg.set("input_channels", "2");
  cfg.validate();
  return cfg;
}

namespace {

/// Error carrying an exit code, raised inside commands.
struct CommandError {
  int code;
  std::string message;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

ExperimentConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  try {
    return ExperimentConfig::load(path);
  } catch (const ConfigError& e) {
    throw CommandError{kExitConfig, e.what()};
  }
}

FlowSeries load_data(const std::string& path) {
  try {
    return load_series(path);
  } catch (const IoError& e) {
    throw CommandError{kExitData, e.what()};
  } catch (const ParseError& e) {
    throw CommandError{kExitData, std::string("data parse error: ") + e.what()};
  }
}

PreparedData prepare_or_fail(ExperimentConfig& config, const FlowSeries& series) {
  try {
    PreparedData d = prepare_data(config, series);
    config.model.input_channels = d.series.sensors();
    config.validate();
    return d;
  } catch (const ConfigError& e) {
    throw CommandError{kExitConfig, e.what()};
  }
}

int cmd_synth(const std::string& out_path, std::size_t sensors, std::size_t days, std::uint64_t seed,
              std::ostream& out) {
  FlowSeries series;
  try {
    series = synthesize_series(sensors, days, seed);
  } catch (const ConfigError& e) {
    throw CommandError{kExitConfig, e.what()};
  }
  try {
    write_series(out_path, series, synthetic_formula_description(seed));
  } catch (const IoError& e) {
    throw CommandError{kExitData, e.what()};
  }
  out << "wrote " << series.steps() << " steps x " << series.sensors() << " sensors to " << out_path << '\n';
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out_dir,
              std::ostream& out) {
  ExperimentConfig config = load_config_or_default(config_path);
  const FlowSeries series = load_data(data_path);
  PreparedData data = prepare_or_fail(config, series);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = config;
  manifest.dataset_fingerprint = hex64(fingerprint(data.series));
  manifest.seeds = {config.model.seed};
  manifest.artifacts = {"checkpoint.ckpt", "history.csv", "timing.csv", "manifest.json"};
  const std::string hash = manifest.hash();

  Model model = Model::build(config.model);
  const TrainHistory history = train(model, data.train, data.val, config.train);

  ensure_dir(out_dir);
  save_checkpoint(fs::path(out_dir) / "checkpoint.ckpt", model, config, data.stats, hash);
  write_text(fs::path(out_dir) / "history.csv", history_csv(history, hash));
  write_text(fs::path(out_dir) / "timing.csv", timing_csv(history, hash));
  write_text(fs::path(out_dir) / "manifest.json", manifest.to_json());

  out << "variant " << variant_name(config.model.variant) << ", " << model.parameter_count() << " parameters\n";
  out << "train loss " << history.initial_train_loss << " -> " << history.epochs.back().train_loss << ", best val "
      << history.best_val_loss << " at epoch " << history.best_epoch << '\n';
  out << "manifest " << hash << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, const std::string& out_dir,
             std::ostream& out) {
  Checkpoint ckpt = [&] {
    try {
      return load_checkpoint(checkpoint_path);
    } catch (const CheckpointError& e) {
      throw CommandError{kExitCheckpoint, e.what()};
    }
  }();
  const FlowSeries series = load_data(data_path);

  PreparedData data;
  try {
    data = prepare_data(ckpt.config, series);
  } catch (const ConfigError& e) {
    throw CommandError{kExitCheckpoint, std::string("checkpoint incompatible with data: ") + e.what()};
  }
  if (data.series.sensors() != ckpt.config.model.input_channels) {
    throw CommandError{kExitCheckpoint, "checkpoint expects " + std::to_string(ckpt.config.model.input_channels) +
                                            " sensors, data has " + std::to_string(data.series.sensors())};
  }
  if (ckpt.config.model.horizon < kReportHorizons.back()) {
    throw CommandError{kExitCheckpoint, "checkpoint horizon " + std::to_string(ckpt.config.model.horizon) +
                                            " is shorter than the 12-step evaluation horizon"};
  }
  // Windows must use the statistics the model was trained with.
  auto segments = split_series(data.series, data.split);
  const WindowedDataset test =
      make_windows(segments[2], ckpt.config.model.history, ckpt.config.model.horizon, ckpt.stats);

  const std::string dataset_id = hex64(fingerprint(data.series));
  EvalReport report = evaluate_horizons(ckpt.model, test, dataset_id);
  EvalReport naive;
  naive.variant = "naive_last_value";
  naive.seed = 0;
  naive.dataset_id = dataset_id;
  naive.horizons = horizon_metrics(test.raw_targets, naive_last_value(test));

  const std::vector<EvalReport> reports{report, naive};
  ensure_dir(out_dir);
  write_text(fs::path(out_dir) / "report.txt", "# manifest=" + ckpt.manifest_hash + "\n" + format_report_table(reports));
  write_text(fs::path(out_dir) / "report.csv", format_report_records(reports, ckpt.manifest_hash));
  out << format_report_table(reports);
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& data_path, const std::vector<std::string>& names,
               std::size_t runs, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  ExperimentConfig config = load_config_or_default(config_path);
  std::vector<Variant> variants;
  try {
    for (const auto& n : names) variants.push_back(parse_variant(n));
  } catch (const ConfigError& e) {
    throw CommandError{kExitConfig, e.what()};
  }
  if (variants.empty()) throw CommandError{kExitConfig, "ablate needs at least one variant"};
  if (runs < 3) throw CommandError{kExitConfig, "ablate needs --runs >= 3"};
  const FlowSeries series = load_data(data_path);
  PreparedData data = prepare_or_fail(config, series);

  RunManifest manifest;
  manifest.command = "ablate";
  manifest.config = config;
  manifest.dataset_fingerprint = hex64(fingerprint(data.series));
  for (auto v : variants) manifest.variants.emplace_back(variant_name(v));
  for (std::size_t r = 0; r < runs; ++r) manifest.seeds.push_back(config.model.seed + r);
  manifest.artifacts = {"ablation.txt", "ablation.csv", "runs.csv", "curves.csv", "manifest.json"};
  const std::string hash = manifest.hash();

  if (runs != 10) err << "note: " << runs << " runs per variant, reporting the plain mean (trimming needs 10)\n";

  std::vector<EvalReport> aggregated;
  std::vector<EvalReport> per_run;
  std::ostringstream curves;
  curves << "# manifest=" << hash << "\nvariant,run,seed,epoch,train_loss,val_loss\n";
  for (Variant v : variants) {
    std::vector<EvalReport> reports;
    for (std::size_t r = 0; r < runs; ++r) {
      ExperimentConfig run_cfg = config;
      run_cfg.model.variant = v;
      run_cfg.set("seed", std::to_string(manifest.seeds[r]));
      Model model = Model::build(run_cfg.model);
      const TrainHistory history = train(model, data.train, data.val, run_cfg.train);
      reports.push_back(evaluate_horizons(model, data.test, manifest.dataset_fingerprint));
      curves << variant_name(v) << ',' << r << ',' << manifest.seeds[r] << ",0,"
             << format_double(history.initial_train_loss) << ',' << format_double(history.initial_val_loss) << '\n';
      for (const auto& e : history.epochs) {
        curves << variant_name(v) << ',' << r << ',' << manifest.seeds[r] << ',' << e.epoch << ','
               << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
      }
      err << "  " << variant_name(v) << " run " << r + 1 << "/" << runs << " done\n";
    }

    EvalReport agg;
    agg.variant = std::string(variant_name(v));
    agg.seed = config.model.seed;
    agg.dataset_id = manifest.dataset_fingerprint;
    for (std::size_t steps : kReportHorizons) {
      auto reduce = [&](auto field) {
        std::vector<double> values;
        for (const auto& rep : reports) values.push_back(field(rep.at(steps)));
        if (runs == 10) return trimmed_mean_protocol(values);
        double s = 0.0;
        for (double x : values) s += x;
        return s / static_cast<double>(values.size());
      };
      Metrics m;
      m.mae = reduce([](const Metrics& x) { return x.mae; });
      m.mse = reduce([](const Metrics& x) { return x.mse; });
      m.rmse = reduce([](const Metrics& x) { return x.rmse; });
      m.mape = reduce([](const Metrics& x) { return x.mape; });
      agg.horizons.push_back({steps, m});
    }
    aggregated.push_back(std::move(agg));
    per_run.insert(per_run.end(), reports.begin(), reports.end());
  }

  ensure_dir(out_dir);
  const std::string table = format_report_table(aggregated);
  write_text(fs::path(out_dir) / "ablation.txt", "# manifest=" + hash + "\n" + table);
  write_text(fs::path(out_dir) / "ablation.csv", format_report_records(aggregated, hash));
  write_text(fs::path(out_dir) / "runs.csv", format_report_records(per_run, hash));
  write_text(fs::path(out_dir) / "curves.csv", curves.str());
  write_text(fs::path(out_dir) / "manifest.json", manifest.to_json());
  out << table;
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, bool inject_fault, std::ostream& out) {
  ExperimentConfig config = config_path.empty() ? gradcheck_default_config() : load_config_or_default(config_path);
  const ModelConfig& mc = config.model;
  if (mc.input_channels > 4 || mc.history > 16) {
    throw CommandError{kExitConfig, "gradcheck config too large (needs input_channels <= 4 and history <= 16)"};
  }
  Model model = [&] {
    try {
      return Model::build(mc);
    } catch (const ConfigError& e) {
      throw CommandError{kExitConfig, e.what()};
    }
  }();

  constexpr std::size_t kBatch = 2;
  Rng rng(derive_seed(mc.seed, "gradcheck.data"));
  Tensor inputs({kBatch, mc.input_channels, mc.history});
  Tensor targets({kBatch, mc.input_channels, mc.horizon});
  for (auto& v : inputs.data()) v = rng.normal();
  for (auto& v : targets.data()) v = rng.normal();

  auto f = [&](Graph& g, ParameterSet&) {
    return mse_loss(model.forward(g, g.constant(inputs)), g.constant(targets));
  };
  debug::set_gradient_fault(inject_fault);
  const GradcheckResult result = gradcheck(f, model.parameters());
  debug::set_gradient_fault(false);

  constexpr double kTolerance = 1e-4;
  const bool ok = result.max_relative_error <= kTolerance;
  out << "gradcheck " << variant_name(mc.variant) << ": " << model.parameter_count() << " parameters in "
      << model.parameters().count() << " arrays, " << result.coordinates_checked << " coordinates checked\n";
  out << "max relative error " << result.max_relative_error << " at " << result.worst_parameter << "["
      << result.worst_index << "]\n";
  out << (ok ? "PASS" : "FAIL") << " (tolerance " << kTolerance << ")\n";
  return ok ? kExitOk : kExitCheckFailed;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MSCMHMST traffic-flow forecasting: synthetic data, training, evaluation, ablations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string out_path, config_path, data_path, checkpoint_path, variants_arg;
  std::size_t sensors = 2, days = 7, runs = 3;
  std::uint64_t seed = 7;
  bool inject_fault = false;

  auto* synth = app.add_subcommand("synth", "write a synthetic matrix_csv flow series");
  synth->add_option("--out", out_path, "output CSV path")->required();
  synth->add_option("--sensors", sensors, "number of sensors")->check(CLI::PositiveNumber);
  synth->add_option("--days", days, "number of days (288 steps each)")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "generator seed");

  auto* train_cmd = app.add_subcommand("train", "train one model and write checkpoint, history and manifest");
  train_cmd->add_option("--config", config_path, "key = value config file (defaults if omitted)");
  train_cmd->add_option("--data", data_path, "matrix_csv flow data")->required();
  train_cmd->add_option("--out", out_path, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint at 3/6/12-step horizons");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "matrix_csv flow data")->required();
  eval_cmd->add_option("--out", out_path, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "repeated seeded runs of several variants with a summary table");
  ablate->add_option("--config", config_path, "key = value config file (defaults if omitted)");
  ablate->add_option("--data", data_path, "matrix_csv flow data")->required();
  ablate->add_option("--variants", variants_arg, "comma-separated variant names")->required();
  ablate->add_option("--runs", runs, "runs per variant (10 enables z-score trimming)");
  ablate->add_option("--out", out_path, "output directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients of the full model");
  grad->add_option("--config", config_path, "small config (input_channels <= 4, history <= 16)");
  grad->add_flag("--inject-fault", inject_fault, "deliberately break one gradient rule (test hook)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(out_path, sensors, days, seed, out);
    if (*train_cmd) return cmd_train(config_path, data_path, out_path, out);
    if (*eval_cmd) return cmd_eval(checkpoint_path, data_path, out_path, out);
    if (*ablate) return cmd_ablate(config_path, data_path, split_list(variants_arg), runs, out_path, out, err);
    if (*grad) return cmd_gradcheck(config_path, inject_fault, out);
  } catch (const CommandError& e) {
    err << "error: " << e.message << '\n';
    return e.code;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace mscmhmst
