#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "batchens/errors.hpp"
#include "batchens/experiment.hpp"

using namespace batchens;

namespace {

// Flag overrides layered on top of the config file.
struct Overrides {
  int epochs = -1;
  double learning_rate = -1.0;
  int batch_size = -1;
  int ensemble_size = -1;
  double dropout_rate = -1.0;
  int jobs = -1;
  std::string output_dir, seeds_csv, method;

  void apply(ExperimentConfig& cfg) const {
    if (epochs >= 0) cfg.train.epochs = epochs;
    if (learning_rate > 0) cfg.train.learning_rate = learning_rate;
    if (batch_size > 0) cfg.train.batch_size = batch_size;
    if (ensemble_size > 0) cfg.model.K = ensemble_size;
    if (dropout_rate >= 0) cfg.model.dropout_rate = dropout_rate;
    if (jobs > 0) cfg.jobs = jobs;
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!method.empty()) cfg.model.method = method_from_string(method);
    if (!seeds_csv.empty()) {
      cfg.seeds.clear();
      std::string token;
      std::istringstream in(seeds_csv);
      while (std::getline(in, token, ',')) cfg.seeds.push_back(std::stoull(token));
    }
  }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--epochs", ov.epochs, "training epochs (default 500)");
  cmd->add_option("--lr", ov.learning_rate, "learning rate (default 0.005)");
  cmd->add_option("--batch-size", ov.batch_size, "mini-batch size (default 64)");
  cmd->add_option("--ensemble-size,-K", ov.ensemble_size, "ensemble size (default 10)");
  cmd->add_option("--dropout", ov.dropout_rate, "dropout rate (default 0.1)");
  cmd->add_option("--jobs", ov.jobs, "parallel seed workers");
  cmd->add_option("--output", ov.output_dir, "run output directory");
  cmd->add_option("--seeds", ov.seeds_csv, "comma-separated seed list");
  cmd->add_option("--method", ov.method,
                  "batch_ensemble | mc_dropout | deep_ensemble | single");
}

ExperimentConfig load_config(const std::string& path, const Overrides& ov) {
  ExperimentConfig cfg = ExperimentConfig::from_json_file(path);
  ov.apply(cfg);
  return cfg;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"BatchEnsemble networks with uncertainty evaluation"};
  app.require_subcommand(1);

  // train: full experiment (train + evaluate + artifacts) per seed
  auto* train_cmd = app.add_subcommand("train", "train and evaluate an experiment config");
  std::string train_config;
  Overrides train_ov;
  train_cmd->add_option("--config", train_config, "experiment JSON")->required();
  add_override_flags(train_cmd, train_ov);

  // evaluate: metrics from a saved checkpoint against the config's dataset
  auto* eval_cmd = app.add_subcommand("evaluate", "re-evaluate a saved checkpoint");
  std::string eval_config, eval_checkpoint, eval_out;
  eval_cmd->add_option("--config", eval_config, "experiment JSON")->required();
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint JSON")->required();
  eval_cmd->add_option("--out", eval_out, "metrics JSON output path (default stdout)");

  // forecast: multi-step predictive distribution from a context window
  auto* fc_cmd = app.add_subcommand("forecast", "ancestral-sampling forecast from a context");
  std::string fc_checkpoint, fc_csv, fc_column = "value", fc_out = "forecast.csv";
  int fc_horizon = 5, fc_paths = 2000;
  double fc_noise = 1.0;
  uint64_t fc_seed = 1;
  std::string fc_coverages = "0.5,0.8,0.95";
  fc_cmd->add_option("--checkpoint", fc_checkpoint, "model checkpoint JSON")->required();
  fc_cmd->add_option("--context-csv", fc_csv, "CSV holding the context series")->required();
  fc_cmd->add_option("--column", fc_column, "series column name");
  fc_cmd->add_option("--horizon", fc_horizon, "steps ahead (default 5)");
  fc_cmd->add_option("--paths", fc_paths, "total sample paths (default 2000)");
  fc_cmd->add_option("--noise-scale", fc_noise, "0 disables sampling noise");
  fc_cmd->add_option("--seed", fc_seed, "sampling seed");
  fc_cmd->add_option("--coverages", fc_coverages, "interval coverages for the CSV");
  fc_cmd->add_option("--out", fc_out, "output CSV");

  // shift-split: construct and describe a tail-exclusion split
  auto* shift_cmd = app.add_subcommand("shift-split", "build a distribution-shift split");
  std::string shift_csv, shift_manifest, shift_out = "shift";
  double shift_q = 0.025;
  uint64_t shift_seed = 1;
  shift_cmd->add_option("--csv", shift_csv, "dataset CSV")->required();
  shift_cmd->add_option("--manifest", shift_manifest, "dataset manifest JSON")->required();
  shift_cmd->add_option("--q", shift_q, "tail quantile (default 0.025)");
  shift_cmd->add_option("--seed", shift_seed, "split seed");
  shift_cmd->add_option("--out", shift_out, "output prefix");

  // synth: emit synthetic datasets
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset CSV");
  std::string synth_kind = "ackley_regression", synth_out = "synth";
  int synth_n = 2000, synth_d = 10;
  double synth_phi = 0.8, synth_sigma = 0.05;
  uint64_t synth_seed = 1;
  synth_cmd->add_option("--kind", synth_kind,
                        "ackley_regression | ackley_classification | ar1");
  synth_cmd->add_option("--n", synth_n, "sample count");
  synth_cmd->add_option("--d", synth_d, "input dimension (ackley)");
  synth_cmd->add_option("--phi", synth_phi, "AR(1) coefficient");
  synth_cmd->add_option("--sigma", synth_sigma, "AR(1) innovation scale");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--out", synth_out, "output prefix");

  // ablate: run a whole ablation suite
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation suite over a base config");
  std::string ablate_suite, ablate_config;
  Overrides ablate_ov;
  ablate_cmd->add_option("--suite", ablate_suite, "adapters | gates | layers | init")->required();
  ablate_cmd->add_option("--config", ablate_config, "base experiment JSON")->required();
  add_override_flags(ablate_cmd, ablate_ov);

  // report: merge finished runs
  auto* report_cmd = app.add_subcommand("report", "merge run directories into tables");
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  report_cmd->add_option("--out", report_out, "report output directory");
  report_cmd->add_option("dirs", report_dirs, "run directories")->required();

  CLI11_PARSE(app, argc, argv);

  if (train_cmd->parsed()) {
    ExperimentConfig cfg = load_config(train_config, train_ov);
    std::vector<SeedOutcome> outcomes = run_experiment(cfg);
    std::cout << "run complete: " << cfg.output_dir << "\n";
    for (size_t i = 0; i < outcomes.size(); ++i)
      std::cout << "  seed " << cfg.seeds[i] << ": nll=" << outcomes[i].report.nll
                << " train_s=" << outcomes[i].report.train_seconds << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    ExperimentConfig cfg = ExperimentConfig::from_json_file(eval_config);
    uint64_t seed = 0;
    Model model = load_model(eval_checkpoint, &seed);
    Rng rng(seed);
    MetricsReport report;
    if (cfg.dataset.timeseries()) {
      SeriesDataset ds = build_experiment_series(cfg, seed);
      ForecastConfig fcfg = cfg.forecast;
      fcfg.context_len = cfg.train.context_len;
      fcfg.horizon = cfg.train.horizon;
      Rng eval_rng = rng.stream("eval");
      report = evaluate_series(model, ds, fcfg, eval_rng);
    } else {
      TabularDataset ds = build_experiment_tabular(cfg, seed);
      Rng eval_rng = rng.stream("eval");
      report = evaluate_tabular(model, ds, eval_rng);
    }
    report.seed = seed;
    report.dataset = cfg.dataset.label() + (cfg.shift ? "/shift" : "");
    const std::string text = report.to_json_string();
    if (eval_out.empty())
      std::cout << text << "\n";
    else {
      std::ofstream out(eval_out);
      out << text;
    }
    return 0;
  }

  if (fc_cmd->parsed()) {
    uint64_t ckpt_seed = 0;
    Model model = load_model(fc_checkpoint, &ckpt_seed);
    RawTable table = read_csv(fc_csv);
    const int col = table.column_index(fc_column);
    if (col < 0) throw DataError("column '" + fc_column + "' not found in " + fc_csv);
    std::vector<double> context;
    for (const auto& row : table.rows) context.push_back(std::stod(row[col]));
    ForecastConfig fcfg;
    fcfg.horizon = fc_horizon;
    fcfg.total_paths = fc_paths;
    fcfg.context_len = static_cast<int>(context.size());
    fcfg.noise_scale = fc_noise;
    Rng rng(fc_seed);
    ForecastPaths paths = ancestral_paths(model, context, fcfg, rng);
    ForecastResult agg = aggregate_forecast(paths);
    std::vector<double> coverages;
    {
      std::istringstream in(fc_coverages);
      std::string token;
      while (std::getline(in, token, ',')) coverages.push_back(std::stod(token));
    }
    std::ofstream out(fc_out);
    if (!out) throw DataError("cannot write " + fc_out);
    out.precision(17);
    out << "step,mean,variance";
    for (double c : coverages) out << ",lo_" << c << ",hi_" << c;
    out << "\n";
    for (int h = 0; h < fc_horizon; ++h) {
      out << h + 1 << "," << agg.mean[h] << "," << agg.variance[h];
      for (double c : coverages) {
        const double z = normal_quantile(0.5 * (1.0 + c));
        const double s = std::sqrt(agg.variance[h]);
        out << "," << agg.mean[h] - z * s << "," << agg.mean[h] + z * s;
      }
      out << "\n";
    }
    std::cout << "forecast written to " << fc_out << "\n";
    return 0;
  }

  if (shift_cmd->parsed()) {
    RawTable table = read_csv(shift_csv);
    DatasetManifest manifest = DatasetManifest::from_json_file(shift_manifest);
    Rng rng(shift_seed);
    ShiftSpec spec;
    TabularDataset ds = make_shift_split(table, manifest, rng, shift_q, &spec);
    std::ofstream report(shift_out + "_report.json");
    report << spec.to_json_string();
    std::ofstream idx(shift_out + "_indices.csv");
    idx << "row,split\n";
    for (int i : ds.train_idx) idx << i << ",train\n";
    for (int i : ds.test_idx) idx << i << ",test\n";
    std::cout << "shift split: " << spec.n_train << " train, " << spec.n_test << " test ("
              << spec.n_shifted << " tail samples moved)\n"
              << "features: " << spec.feature_names[0] << ", " << spec.feature_names[1] << "\n";
    return 0;
  }

  if (synth_cmd->parsed()) {
    Rng rng(synth_seed);
    if (synth_kind == "ar1") {
      std::vector<double> series = gen_ar1(synth_n, synth_phi, 0.05, synth_sigma, rng);
      write_series_csv(synth_out + ".csv", series);
    } else if (synth_kind == "ackley_regression" || synth_kind == "ackley_classification") {
      AckleyConfig acfg;
      acfg.n = synth_n;
      acfg.d = synth_d;
      const Task task =
          synth_kind == "ackley_regression" ? Task::regression : Task::classification;
      SyntheticTabular synth = gen_ackley(acfg, task, rng);
      write_tabular_csv(synth_out + ".csv", synth.X,
                        task == Task::regression ? &synth.y : nullptr,
                        task == Task::classification ? &synth.labels : nullptr);
      DatasetManifest manifest;
      manifest.name = synth_kind;
      manifest.task = to_string(task);
      manifest.target = "target";
      std::ofstream mf(synth_out + "_manifest.json");
      mf << manifest.to_json_string();
    } else {
      throw ConfigError("unknown synth kind '" + synth_kind + "'");
    }
    std::cout << "wrote " << synth_out << ".csv\n";
    return 0;
  }

  if (ablate_cmd->parsed()) {
    ExperimentConfig cfg = load_config(ablate_config, ablate_ov);
    run_ablation(ablate_suite, cfg);
    std::cout << "ablation written under " << cfg.output_dir << "\n";
    return 0;
  }

  if (report_cmd->parsed()) {
    write_report(report_dirs, report_out);
    std::cout << "report written to " << report_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
